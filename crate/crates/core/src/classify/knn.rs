use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnHyper {
    pub k: usize,
}

impl Default for KnnHyper {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Euclidean k-nearest-neighbours over the stored training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub hyper: KnnHyper,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl KnnModel {
    /// Share of buggy samples among the k nearest; equal distances favour the
    /// lower training index.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut dists: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d: f64 = r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let k = self.hyper.k;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dists.len() {
            dists.select_nth_unstable_by(k - 1, cmp);
        }
        let positives = dists[..k].iter().filter(|(_, i)| self.labels[*i]).count();
        positives as f64 / k as f64
    }
}

pub fn train_knn(train: &FeatureMatrix, hyper: KnnHyper) -> Result<KnnModel> {
    if hyper.k == 0 || hyper.k > train.len() {
        return Err(Error::Parameter(format!(
            "k={} must be between 1 and the training size {}",
            hyper.k,
            train.len()
        )));
    }
    Ok(KnnModel {
        hyper,
        rows: train.rows.clone(),
        labels: train.labels.clone(),
    })
}
