//! Greedy forward ensemble selection with replacement.

use serde::{Deserialize, Serialize};

use super::metrics::f1_score;
use super::{FeatureMatrix, TrainedModel};
use crate::error::{Error, Result};

pub const ENSEMBLE_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Times each candidate was picked in the kept prefix.
    pub counts: Vec<usize>,
    /// Candidate picked in each round, including rounds past the kept prefix.
    pub order: Vec<usize>,
    /// Validation F1 after each round.
    pub scores: Vec<f64>,
    pub best_f1: f64,
}

/// Runs `rounds` greedy steps; each adds the candidate whose inclusion gives
/// the highest validation F1 of the count-weighted mean probability (lowest
/// index on ties). The best-scoring prefix (earliest on ties) is kept.
pub fn select_ensemble(val_probs: &[Vec<f64>], labels: &[bool], rounds: usize) -> Selection {
    assert!(!val_probs.is_empty() && rounds > 0);
    let n = labels.len();
    let mut sum = vec![0.0; n];
    let mut order = Vec::with_capacity(rounds);
    let mut scores = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let mut best: Option<(usize, f64)> = None;
        for (m, probs) in val_probs.iter().enumerate() {
            let mean: Vec<f64> = sum
                .iter()
                .zip(probs)
                .map(|(s, p)| (s + p) / round as f64)
                .collect();
            let f1 = f1_score(&mean, labels);
            if best.is_none_or(|(_, b)| f1 > b) {
                best = Some((m, f1));
            }
        }
        let (m, f1) = best.unwrap();
        for (s, p) in sum.iter_mut().zip(&val_probs[m]) {
            *s += p;
        }
        order.push(m);
        scores.push(f1);
    }
    let (best_len, best_f1) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bf), (i, &f)| {
            if f > bf {
                (i, f)
            } else {
                (bi, bf)
            }
        });
    let mut counts = vec![0; val_probs.len()];
    for &m in &order[..=best_len] {
        counts[m] += 1;
    }
    Selection {
        counts,
        order,
        scores,
        best_f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    pub members: Vec<TrainedModel>,
    pub weights: Vec<usize>,
    pub validation_f1: f64,
}

impl WeightedEnsemble {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let total: usize = self.weights.iter().sum();
        self.members
            .iter()
            .zip(&self.weights)
            .map(|(m, &w)| w as f64 * m.predict(row))
            .sum::<f64>()
            / total as f64
    }
}

/// Builds a weighted ensemble from already trained models; only selected
/// members are retained.
pub fn train_ensemble(models: Vec<TrainedModel>, validation: &FeatureMatrix) -> Result<WeightedEnsemble> {
    if models.is_empty() {
        return Err(Error::Parameter("ensemble needs at least one base model".into()));
    }
    if validation.is_empty() {
        return Err(Error::Data("ensemble selection needs a validation set".into()));
    }
    let val_probs: Vec<Vec<f64>> = models.iter().map(|m| m.predict_all(validation)).collect();
    let selection = select_ensemble(&val_probs, &validation.labels, ENSEMBLE_ROUNDS);
    let best_single = val_probs
        .iter()
        .map(|p| f1_score(p, &validation.labels))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        selection.best_f1 >= best_single,
        "ensemble selection lost to a single model"
    );
    let (members, weights) = models
        .into_iter()
        .zip(selection.counts)
        .filter(|(_, c)| *c > 0)
        .unzip();
    Ok(WeightedEnsemble {
        members,
        weights,
        validation_f1: selection.best_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_is_itself() {
        let probs = vec![vec![0.9, 0.2, 0.6]];
        let labels = [true, false, false];
        let s = select_ensemble(&probs, &labels, ENSEMBLE_ROUNDS);
        assert_eq!(s.counts, vec![1]);
        assert_eq!(s.best_f1, f1_score(&probs[0], &labels));
    }

    #[test]
    fn dominant_model_takes_all_weight() {
        let labels = [true, true, false, false];
        let good = vec![0.9, 0.8, 0.1, 0.2];
        let bad = vec![0.1, 0.6, 0.9, 0.2];
        let s = select_ensemble(&[bad, good.clone()], &labels, ENSEMBLE_ROUNDS);
        assert_eq!(s.counts, vec![0, 1]);
        assert_eq!(s.best_f1, 1.0);
        assert_eq!(s.best_f1, f1_score(&good, &labels));
    }

    #[test]
    fn complementary_errors_beat_every_member() {
        // Each model is confidently wrong on a different third of the samples;
        // the averaged vote is right everywhere.
        let labels: Vec<bool> = (0..12).map(|i| i % 2 == 0).collect();
        let models: Vec<Vec<f64>> = (0..3)
            .map(|m| {
                labels
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        let wrong = i % 3 == m;
                        if y != wrong {
                            0.9
                        } else {
                            0.1
                        }
                    })
                    .collect()
            })
            .collect();
        let singles: Vec<f64> = models.iter().map(|p| f1_score(p, &labels)).collect();
        let s = select_ensemble(&models, &labels, ENSEMBLE_ROUNDS);
        assert_eq!(s.best_f1, 1.0);
        assert!(singles.iter().all(|&f| s.best_f1 > f), "{singles:?}");
    }
}
