//! Split, tune on validation F1, train every model family, build the weighted
//! ensemble and score everything on the held-out test part.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::metrics::f1_score;
use super::{
    evaluate, split, train_ensemble, train_forest, train_knn, train_linear, DataSplit,
    EvaluationReport, FeatureMatrix, ForestHyper, ForestVariant, KnnHyper, LinearHyper,
    SplitFractions, TrainedModel,
};
use crate::error::{Error, Result};
use crate::segmentation::{Genre, VideoMeta};
use crate::seeds;
use crate::text::{SegmentFeatures, Standardizer};

/// Hyperparameter values tried per model family; the best validation F1 wins
/// (first in grid order on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierGrid {
    pub linear_learning_rates: Vec<f64>,
    pub linear_max_epochs: Vec<usize>,
    pub linear_l2: Vec<f64>,
    pub knn_k: Vec<usize>,
    pub forest_trees: Vec<usize>,
}

impl Default for ClassifierGrid {
    fn default() -> Self {
        Self {
            linear_learning_rates: vec![0.1, 0.5],
            linear_max_epochs: vec![500],
            linear_l2: vec![1e-4],
            knn_k: vec![3, 5, 9],
            forest_trees: vec![100],
        }
    }
}

impl ClassifierGrid {
    fn linear(&self) -> Vec<LinearHyper> {
        let mut out = Vec::new();
        for &learning_rate in &self.linear_learning_rates {
            for &max_epochs in &self.linear_max_epochs {
                for &l2 in &self.linear_l2 {
                    out.push(LinearHyper {
                        l2,
                        learning_rate,
                        max_epochs,
                        ..LinearHyper::default()
                    });
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.linear_learning_rates.is_empty()
            || self.linear_max_epochs.is_empty()
            || self.linear_l2.is_empty()
            || self.knn_k.is_empty()
            || self.forest_trees.is_empty()
        {
            return Err(Error::Parameter("every classifier grid list needs a value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub standardize: bool,
    pub grid: ClassifierGrid,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            fractions: SplitFractions::default(),
            standardize: false,
            grid: ClassifierGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSet {
    pub models: Vec<TrainedModel>,
    pub validation_f1: Vec<f64>,
    pub standardizer: Option<Standardizer>,
    pub dim: usize,
}

impl TrainedSet {
    pub fn prepare(&self, data: &FeatureMatrix) -> FeatureMatrix {
        match &self.standardizer {
            Some(s) => data.map_rows(|r| s.apply(r)),
            None => data.clone(),
        }
    }

    pub fn ensemble(&self) -> Option<&TrainedModel> {
        self.models
            .iter()
            .find(|m| matches!(m, TrainedModel::WeightedEnsemble(_)))
    }
}

fn tune<T>(
    candidates: impl IntoIterator<Item = T>,
    validation: &FeatureMatrix,
    mut fit: impl FnMut(T) -> Result<TrainedModel>,
) -> Result<(TrainedModel, f64)> {
    let mut best: Option<(TrainedModel, f64)> = None;
    for hyper in candidates {
        let model = fit(hyper)?;
        let f1 = f1_score(&model.predict_all(validation), &validation.labels);
        if best.as_ref().is_none_or(|(_, b)| f1 > *b) {
            best = Some((model, f1));
        }
    }
    best.ok_or_else(|| Error::Parameter("empty hyperparameter grid".into()))
}

/// Trains the linear, k-NN, random forest and extra-trees families on the
/// train part (tuned on validation), then the weighted ensemble over them.
pub fn train_all(data: &DataSplit, config: &ProtocolConfig) -> Result<TrainedSet> {
    config.grid.validate()?;
    let raw_train = FeatureMatrix::from_features(&data.train);
    let raw_val = FeatureMatrix::from_features(&data.validation);
    let standardizer = if config.standardize {
        Some(Standardizer::fit(&raw_train.rows)?)
    } else {
        None
    };
    let prep = |m: &FeatureMatrix| match &standardizer {
        Some(s) => m.map_rows(|r| s.apply(r)),
        None => m.clone(),
    };
    let train = prep(&raw_train);
    let val = prep(&raw_val);
    let root = config.seed;

    let linear_seed = seeds::derive_seed(root, seeds::STAGE_LINEAR);
    let (linear, linear_f1) = tune(config.grid.linear(), &val, |h| {
        train_linear(&train, h, linear_seed).map(TrainedModel::Linear)
    })?;
    let knn_k: Vec<usize> = config
        .grid
        .knn_k
        .iter()
        .copied()
        .filter(|&k| k <= train.len())
        .collect();
    let (knn, knn_f1) = tune(knn_k, &val, |k| {
        train_knn(&train, KnnHyper { k }).map(TrainedModel::Knn)
    })?;
    let mut forests = Vec::new();
    for (variant, stage) in [
        (ForestVariant::RandomForest, seeds::STAGE_RANDOM_FOREST),
        (ForestVariant::ExtraTrees, seeds::STAGE_EXTRA_TREES),
    ] {
        let seed = seeds::derive_seed(root, stage);
        let hypers = config.grid.forest_trees.iter().map(|&trees| ForestHyper {
            trees,
            ..ForestHyper::for_variant(variant)
        });
        forests.push(tune(hypers, &val, |h| {
            train_forest(&train, h, variant, seed).map(|f| match variant {
                ForestVariant::RandomForest => TrainedModel::RandomForest(f),
                ForestVariant::ExtraTrees => TrainedModel::ExtraTrees(f),
            })
        })?);
    }
    let [(rf, rf_f1), (et, et_f1)]: [(TrainedModel, f64); 2] =
        forests.try_into().expect("two forest variants");

    let base = vec![linear, knn, rf, et];
    let ensemble = train_ensemble(base.clone(), &val)?;
    let ens_f1 = ensemble.validation_f1;
    let mut models = base;
    models.push(TrainedModel::WeightedEnsemble(ensemble));
    Ok(TrainedSet {
        models,
        validation_f1: vec![linear_f1, knn_f1, rf_f1, et_f1, ens_f1],
        standardizer,
        dim: train.dim(),
    })
}

/// Scores every model of the set on the test part.
pub fn evaluate_all(set: &TrainedSet, test: &[SegmentFeatures], dataset: &str) -> Result<EvaluationReport> {
    let test = set.prepare(&FeatureMatrix::from_features(test));
    let rows = set
        .models
        .iter()
        .map(|m| evaluate(m, &test))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        dataset: dataset.to_string(),
        rows,
    })
}

pub struct ProtocolRun {
    pub split: DataSplit,
    pub trained: TrainedSet,
    pub report: EvaluationReport,
}

pub fn run_protocol(features: &[SegmentFeatures], dataset: &str, config: &ProtocolConfig) -> Result<ProtocolRun> {
    let split_seed = seeds::derive_seed(config.seed, seeds::STAGE_SPLIT);
    let data = split(features, split_seed, config.fractions)?;
    let trained = train_all(&data, config)?;
    let report = evaluate_all(&trained, &data.test, dataset)?;
    Ok(ProtocolRun {
        split: data,
        trained,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "lowercase")]
pub enum SubsetFilter {
    Genre(Genre),
    Game(String),
}

impl fmt::Display for SubsetFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetFilter::Genre(g) => write!(f, "genre={g}"),
            SubsetFilter::Game(t) => write!(f, "game={t}"),
        }
    }
}

impl SubsetFilter {
    pub fn matches(&self, meta: &VideoMeta) -> bool {
        match self {
            SubsetFilter::Genre(g) => meta.genre == *g,
            SubsetFilter::Game(t) => meta.game_title == *t,
        }
    }
}

/// Features of the videos selected by `filter`.
pub fn filter_features(
    features: &[SegmentFeatures],
    metas: &[VideoMeta],
    filter: &SubsetFilter,
) -> Result<Vec<SegmentFeatures>> {
    let selected: BTreeMap<&str, ()> = metas
        .iter()
        .filter(|m| filter.matches(m))
        .map(|m| (m.video_id.as_str(), ()))
        .collect();
    if selected.is_empty() {
        return Err(Error::Data(format!("subset {filter} matches no video")));
    }
    let out: Vec<SegmentFeatures> = features
        .iter()
        .filter(|f| selected.contains_key(f.key.video_id.as_str()))
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(Error::Data(format!("subset {filter} has no segments")));
    }
    Ok(out)
}

/// The full protocol restricted to one genre or game.
pub fn subset_run(
    features: &[SegmentFeatures],
    metas: &[VideoMeta],
    filter: &SubsetFilter,
    config: &ProtocolConfig,
) -> Result<EvaluationReport> {
    let subset = filter_features(features, metas, filter)?;
    Ok(run_protocol(&subset, &filter.to_string(), config)?.report)
}
