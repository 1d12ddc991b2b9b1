//! Gini-impurity decision tree ensembles: random forests and extremely
//! randomized trees.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestVariant {
    /// Best threshold per candidate feature.
    RandomForest,
    /// One uniformly drawn threshold per candidate feature.
    ExtraTrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub trees: usize,
    /// Candidate features per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_leaf: usize,
}

impl ForestHyper {
    pub fn for_variant(variant: ForestVariant) -> Self {
        Self {
            trees: 100,
            max_features: None,
            bootstrap: variant == ForestVariant::RandomForest,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        p: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p } => return *p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub variant: ForestVariant,
    pub hyper: ForestHyper,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of the trees' leaf positive rates.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn train_forest(
    train: &FeatureMatrix,
    hyper: ForestHyper,
    variant: ForestVariant,
    seed: u64,
) -> Result<Forest> {
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty set".into()));
    }
    if hyper.trees == 0 || hyper.min_leaf == 0 {
        return Err(Error::Parameter(
            "forest needs at least one tree and min_leaf >= 1".into(),
        ));
    }
    let d = train.dim();
    let mtry = hyper
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d.max(1));
    let trees = (0..hyper.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeds::stage_rng(seed, &format!("tree/{t}"));
            let n = train.len();
            let samples: Vec<usize> = if hyper.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder {
                data: train,
                variant,
                mtry,
                min_leaf: hyper.min_leaf,
                rng,
                nodes: Vec::new(),
            }
            .build(samples)
        })
        .collect();
    Ok(Forest {
        variant,
        hyper,
        seed,
        trees,
    })
}

struct TreeBuilder<'a> {
    data: &'a FeatureMatrix,
    variant: ForestVariant,
    mtry: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_sum(pos: usize, n: usize) -> f64 {
    // n * gini, so sums over children stay comparable.
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}

impl TreeBuilder<'_> {
    fn build(mut self, samples: Vec<usize>) -> Tree {
        let mut stack = vec![(0usize, samples)];
        self.nodes.push(Node::Leaf { p: 0.0 });
        while let Some((slot, samples)) = stack.pop() {
            let n = samples.len();
            let pos = samples.iter().filter(|&&i| self.data.labels[i]).count();
            let leaf = Node::Leaf {
                p: pos as f64 / n as f64,
            };
            if pos == 0 || pos == n || n < 2 * self.min_leaf {
                self.nodes[slot] = leaf;
                continue;
            }
            match self.best_split(&samples) {
                None => self.nodes[slot] = leaf,
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .into_iter()
                        .partition(|&i| self.data.rows[i][c.feature] <= c.threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { p: 0.0 });
                    let right = self.nodes.len();
                    self.nodes.push(Node::Leaf { p: 0.0 });
                    self.nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                    };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        Tree { nodes: self.nodes }
    }

    /// Visits features in random order until `mtry` non-constant ones have
    /// been scored.
    fn best_split(&mut self, samples: &[usize]) -> Option<Candidate> {
        let mut features: Vec<usize> = (0..self.data.dim()).collect();
        features.shuffle(&mut self.rng);
        let mut scored = 0;
        let mut best: Option<Candidate> = None;
        for f in features {
            if scored == self.mtry {
                break;
            }
            let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.data.rows[i][f];
                (lo.min(v), hi.max(v))
            });
            if lo >= hi {
                continue;
            }
            scored += 1;
            let candidate = match self.variant {
                ForestVariant::RandomForest => self.best_threshold(samples, f),
                ForestVariant::ExtraTrees => {
                    let t = self.rng.random_range(lo..hi);
                    self.score_threshold(samples, f, t)
                }
            };
            if let Some(c) = candidate {
                if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn score_threshold(&self, samples: &[usize], f: usize, t: f64) -> Option<Candidate> {
        let (mut nl, mut pl, mut pr) = (0, 0, 0);
        for &i in samples {
            let y = self.data.labels[i];
            if self.data.rows[i][f] <= t {
                nl += 1;
                pl += y as usize;
            } else {
                pr += y as usize;
            }
        }
        let nr = samples.len() - nl;
        if nl < self.min_leaf || nr < self.min_leaf {
            return None;
        }
        Some(Candidate {
            feature: f,
            threshold: t,
            impurity: gini_sum(pl, nl) + gini_sum(pr, nr),
        })
    }

    fn best_threshold(&self, samples: &[usize], f: usize) -> Option<Candidate> {
        let mut vals: Vec<(f64, bool)> = samples
            .iter()
            .map(|&i| (self.data.rows[i][f], self.data.labels[i]))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let total_pos = vals.iter().filter(|v| v.1).count();
        let mut pl = 0;
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            pl += vals[i].1 as usize;
            let nl = i + 1;
            if vals[i].0 == vals[i + 1].0 || nl < self.min_leaf || n - nl < self.min_leaf {
                continue;
            }
            let impurity = gini_sum(pl, nl) + gini_sum(total_pos - pl, n - nl);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
                if threshold >= vals[i + 1].0 {
                    threshold = vals[i].0;
                }
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    impurity,
                });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = seeds::rng(seed);
        let mut m = FeatureMatrix::default();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            m.push(vec![a, b], (a > 0.0) != (b > 0.0));
        }
        m
    }

    fn accuracy(f: &Forest, m: &FeatureMatrix) -> f64 {
        let hits = m
            .rows
            .iter()
            .zip(&m.labels)
            .filter(|(r, &y)| (f.predict(r) >= 0.5) == y)
            .count();
        hits as f64 / m.len() as f64
    }

    #[test]
    fn single_class_predicts_constant() {
        let mut m = FeatureMatrix::default();
        for i in 0..10 {
            m.push(vec![i as f64], true);
        }
        for v in [ForestVariant::RandomForest, ForestVariant::ExtraTrees] {
            let f = train_forest(&m, ForestHyper::for_variant(v), v, 1).unwrap();
            assert_eq!(f.predict(&[3.0]), 1.0);
            assert_eq!(f.predict(&[-30.0]), 1.0);
        }
    }

    #[test]
    fn xor_is_learned_by_both_variants() {
        let train = xor(200, 1);
        let test = xor(200, 2);
        for v in [ForestVariant::RandomForest, ForestVariant::ExtraTrees] {
            let f = train_forest(&train, ForestHyper::for_variant(v), v, 7).unwrap();
            let acc = accuracy(&f, &test);
            assert!(acc >= 0.95, "{v:?} accuracy {acc}");
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let train = xor(100, 3);
        let v = ForestVariant::ExtraTrees;
        let a = train_forest(&train, ForestHyper::for_variant(v), v, 5).unwrap();
        let b = train_forest(&train, ForestHyper::for_variant(v), v, 5).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&train, ForestHyper::for_variant(v), v, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pure_training_fit_without_bootstrap() {
        let train = xor(60, 4);
        let v = ForestVariant::RandomForest;
        let hyper = ForestHyper { bootstrap: false, ..ForestHyper::for_variant(v) };
        let f = train_forest(&train, hyper, v, 1).unwrap();
        assert_eq!(accuracy(&f, &train), 1.0);
    }
}
