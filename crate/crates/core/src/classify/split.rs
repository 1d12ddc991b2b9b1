use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::text::SegmentFeatures;

/// Minimum samples of each class accepted by [`split`].
pub const MIN_PER_CLASS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Parameter(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Vec<SegmentFeatures>,
    pub validation: Vec<SegmentFeatures>,
    pub test: Vec<SegmentFeatures>,
    pub seed: u64,
    pub fractions: SplitFractions,
}

/// Seeded split stratified by label; each part keeps input order.
pub fn split(features: &[SegmentFeatures], seed: u64, fractions: SplitFractions) -> Result<DataSplit> {
    fractions.validate()?;
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..features.len()).partition(|&i| features[i].label.is_buggy());
    for (name, class) in [("buggy", &pos), ("clean", &neg)] {
        if class.len() < MIN_PER_CLASS {
            return Err(Error::Data(format!(
                "split needs at least {MIN_PER_CLASS} {name} samples, found {}",
                class.len()
            )));
        }
    }

    let mut rng = seeds::rng(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        let n = class.len() as f64;
        let n_train = (fractions.train * n).round() as usize;
        let n_val = (fractions.validation * n).round() as usize;
        parts[0].extend_from_slice(&class[..n_train]);
        parts[1].extend_from_slice(&class[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&class[n_train + n_val..]);
    }
    let [train, validation, test] = parts.map(|mut idx| {
        idx.sort_unstable();
        idx.into_iter().map(|i| features[i].clone()).collect::<Vec<_>>()
    });
    Ok(DataSplit {
        train,
        validation,
        test,
        seed,
        fractions,
    })
}
