//! L2-regularized logistic regression fit by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearHyper {
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LinearHyper {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.1,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LinearHyper,
    pub seed: u64,
    pub epochs: usize,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, row) + self.bias)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean log loss plus `l2 / 2 * |w|^2`; the bias is not penalized.
///
/// Parameters are laid out as `[w_0, ..., w_{d-1}, bias]`.
pub struct LogisticObjective<'a> {
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [bool],
    pub l2: f64,
}

impl LogisticObjective<'_> {
    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_and_gradient(params).0
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.loss_and_gradient(params).1
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = params.len() - 1;
        let (w, b) = (&params[..d], params[d]);
        let n = self.rows.len() as f64;
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for (x, &y) in self.rows.iter().zip(self.labels) {
            let z = dot(w, x) + b;
            let t = if y { 1.0 } else { 0.0 };
            loss += softplus(z) - t * z;
            let r = sigmoid(z) - t;
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g += r * xi;
            }
            grad[d] += r;
        }
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        for (g, wi) in grad[..d].iter_mut().zip(w) {
            *g += self.l2 * wi;
        }
        loss += 0.5 * self.l2 * dot(w, w);
        (loss, grad)
    }
}

pub fn train_linear(train: &FeatureMatrix, hyper: LinearHyper, seed: u64) -> Result<LinearModel> {
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty set".into()));
    }
    let objective = LogisticObjective {
        rows: &train.rows,
        labels: &train.labels,
        l2: hyper.l2,
    };
    let d = train.dim();
    let mut params = vec![0.0; d + 1];
    let mut epochs = 0;
    while epochs < hyper.max_epochs {
        let (loss, grad) = objective.loss_and_gradient(&params);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss at epoch {epochs}; try a learning rate below {}",
                hyper.learning_rate
            )));
        }
        if dot(&grad, &grad).sqrt() < hyper.tolerance {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= hyper.learning_rate * g;
        }
        epochs += 1;
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence(format!(
            "parameters became non-finite; try a learning rate below {}",
            hyper.learning_rate
        )));
    }
    let bias = params.pop().unwrap();
    Ok(LinearModel {
        weights: params,
        bias,
        hyper,
        seed,
        epochs,
    })
}
