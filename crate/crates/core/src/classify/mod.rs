//! Binary bug classifiers and their evaluation protocol.

pub mod ensemble;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod metrics;
pub mod protocol;
pub mod split;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::SegmentKey;
use crate::text::SegmentFeatures;

pub use ensemble::{select_ensemble, train_ensemble, WeightedEnsemble};
pub use forest::{train_forest, Forest, ForestHyper, ForestVariant};
pub use knn::{train_knn, KnnHyper, KnnModel};
pub use linear::{train_linear, LinearHyper, LinearModel, LogisticObjective};
pub use metrics::{Confusion, EvaluationReport, ModelScore};
pub use split::{split, DataSplit, SplitFractions};

/// Dense rows with boolean (buggy) labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub keys: Vec<SegmentKey>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn from_features(features: &[SegmentFeatures]) -> Self {
        Self {
            keys: features.iter().map(|f| f.key.clone()).collect(),
            rows: features.iter().map(SegmentFeatures::values).collect(),
            labels: features.iter().map(|f| f.label.is_buggy()).collect(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>, label: bool) {
        self.keys.push(SegmentKey::new("", self.rows.len()));
        self.rows.push(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            keys: self.keys.clone(),
            rows: self.rows.iter().map(|r| f(r)).collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Linear,
    Knn,
    RandomForest,
    ExtraTrees,
    WeightedEnsemble,
}

impl ModelKind {
    /// Name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Linear => "Linear",
            ModelKind::Knn => "KNeighbors",
            ModelKind::RandomForest => "RandomForest",
            ModelKind::ExtraTrees => "ExtraTrees",
            ModelKind::WeightedEnsemble => "Weighted Ensemble",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Knn => "knn",
            ModelKind::RandomForest => "random_forest",
            ModelKind::ExtraTrees => "extra_trees",
            ModelKind::WeightedEnsemble => "weighted_ensemble",
        }
    }

    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Knn,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::WeightedEnsemble,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state")]
pub enum TrainedModel {
    Linear(LinearModel),
    Knn(KnnModel),
    RandomForest(Forest),
    ExtraTrees(Forest),
    WeightedEnsemble(WeightedEnsemble),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Linear(_) => ModelKind::Linear,
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::RandomForest(_) => ModelKind::RandomForest,
            TrainedModel::ExtraTrees(_) => ModelKind::ExtraTrees,
            TrainedModel::WeightedEnsemble(_) => ModelKind::WeightedEnsemble,
        }
    }

    /// Probability that the row shows a bug.
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            TrainedModel::Linear(m) => m.predict(row),
            TrainedModel::Knn(m) => m.predict(row),
            TrainedModel::RandomForest(m) | TrainedModel::ExtraTrees(m) => m.predict(row),
            TrainedModel::WeightedEnsemble(m) => m.predict(row),
        }
    }

    pub fn predict_all(&self, data: &FeatureMatrix) -> Vec<f64> {
        use rayon::prelude::*;
        data.rows.par_iter().map(|r| self.predict(r)).collect()
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    dim: usize,
    model: TrainedModel,
}

pub fn save_model(path: &Path, model: &TrainedModel, dim: usize) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        dim,
        model: model.clone(),
    };
    std::fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
}

/// Loads a model and the feature dimensionality it was trained on.
pub fn load_model(path: &Path) -> Result<(TrainedModel, usize)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&raw)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{} has model format {}, expected {MODEL_FORMAT_VERSION}",
            path.display(),
            file.format_version
        )));
    }
    Ok((file.model, file.dim))
}

/// Buggy-class precision, recall and F1 on a test set.
pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix) -> Result<ModelScore> {
    if test.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty test set".into()));
    }
    let probs = model.predict_all(test);
    Ok(ModelScore::new(
        model.kind().display_name(),
        Confusion::from_predictions(&probs, &test.labels),
    ))
}
