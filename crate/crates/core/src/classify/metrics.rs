use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities at or above this are called buggy.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(probabilities: &[f64], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in probabilities.iter().zip(labels) {
            match (p >= DECISION_THRESHOLD, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Buggy-class F1 of thresholded probabilities.
pub fn f1_score(probabilities: &[f64], labels: &[bool]) -> f64 {
    Confusion::from_predictions(probabilities, labels).f1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

impl ModelScore {
    pub fn new(model: impl Into<String>, confusion: Confusion) -> Self {
        Self {
            model: model.into(),
            f1: confusion.f1(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub rows: Vec<ModelScore>,
}

impl EvaluationReport {
    pub fn best(&self) -> Option<&ModelScore> {
        self.rows
            .iter()
            .reduce(|best, r| if r.f1 > best.f1 { r } else { best })
    }

    pub fn row(&self, model: &str) -> Option<&ModelScore> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "dataset", "model", "f1", "precision", "recall", "tp", "fp", "fn", "tn",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.dataset.clone(),
                r.model.clone(),
                format!("{:.6}", r.f1),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.recall),
                r.confusion.tp.to_string(),
                r.confusion.fp.to_string(),
                r.confusion.fn_.to_string(),
                r.confusion.tn.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let mut dataset = String::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let count = |i: usize| -> Result<usize> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Data(format!("bad count {:?} in {}", field(i), path.display())))
            };
            dataset = field(0).to_string();
            let confusion = Confusion {
                tp: count(5)?,
                fp: count(6)?,
                fn_: count(7)?,
                tn: count(8)?,
            };
            rows.push(ModelScore::new(field(1), confusion));
        }
        Ok(Self { dataset, rows })
    }

    /// Fixed-width table with the columns Model, F1, Precision, Recall.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}", self.dataset);
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>9}  {:>6}",
            "Model", "F1", "Precision", "Recall"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.2}  {:>9.2}  {:>6.2}",
                r.model, r.f1, r.precision, r.recall
            );
        }
        out
    }
}
