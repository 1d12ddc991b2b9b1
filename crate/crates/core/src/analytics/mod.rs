//! Per-video bug distribution attributes, the genre comparison battery and
//! the user-study comparison.

pub mod attributes;
pub mod stats;
pub mod user_study;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{Genre, VideoMeta};

pub use attributes::{attributes_from_flags, count_gaps, video_attributes, VideoAttributes};
pub use stats::{bonferroni, cohens_d, ks_normality, t_test, StatResult, TTestKind};
pub use user_study::{map_user_windows, user_study_summary, UserStudySummary, UserWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    TotalSegments,
    BuggySegments,
    BuggyRatio,
    StartTimeRatio,
    Gaps,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::TotalSegments,
        Attribute::BuggySegments,
        Attribute::BuggyRatio,
        Attribute::StartTimeRatio,
        Attribute::Gaps,
    ];

    /// Whether videos without buggy segments are left out before testing.
    pub fn excludes_bug_free(self) -> bool {
        matches!(self, Attribute::StartTimeRatio | Attribute::Gaps)
    }

    pub fn value(self, a: &VideoAttributes) -> Option<f64> {
        match self {
            Attribute::TotalSegments => Some(a.total_segments as f64),
            Attribute::BuggySegments => Some(a.buggy_segments as f64),
            Attribute::BuggyRatio => Some(a.buggy_ratio),
            Attribute::StartTimeRatio => a.start_time_ratio,
            Attribute::Gaps => Some(a.gaps as f64),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::TotalSegments => "total_segments",
            Attribute::BuggySegments => "buggy_segments",
            Attribute::BuggyRatio => "buggy_ratio",
            Attribute::StartTimeRatio => "start_time_ratio",
            Attribute::Gaps => "gaps",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeComparison {
    pub attribute: Attribute,
    pub n_action: usize,
    pub n_sports: usize,
    pub mean_action: f64,
    pub mean_sports: f64,
    pub ks_action: Option<StatResult>,
    pub ks_sports: Option<StatResult>,
    pub t_test: Option<StatResult>,
    pub reject: bool,
    /// Why a test could not be run.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreComparison {
    pub alpha: f64,
    pub corrected_alpha: f64,
    pub rows: Vec<AttributeComparison>,
}

/// Action vs Sports comparison of every attribute: normality per genre, a
/// two-sample t-test, then Bonferroni across the attributes tested.
pub fn genre_comparison(
    attributes: &[VideoAttributes],
    metas: &[VideoMeta],
    alpha: f64,
    kind: TTestKind,
) -> Result<GenreComparison> {
    let genre_of: BTreeMap<&str, Genre> =
        metas.iter().map(|m| (m.video_id.as_str(), m.genre)).collect();
    let mut rows = Vec::new();
    for attr in Attribute::ALL {
        let mut action = Vec::new();
        let mut sports = Vec::new();
        for a in attributes {
            let genre = genre_of.get(a.video_id.as_str()).ok_or_else(|| {
                Error::Integrity(format!("no metadata for video {}", a.video_id))
            })?;
            if attr.excludes_bug_free() && a.buggy_segments == 0 {
                continue;
            }
            let Some(v) = attr.value(a) else { continue };
            match genre {
                Genre::Action => action.push(v),
                Genre::Sports => sports.push(v),
                Genre::Other => {}
            }
        }
        if action.is_empty() || sports.is_empty() {
            return Err(Error::Data(format!(
                "attribute {attr}: a genre has no videos (action {}, sports {})",
                action.len(),
                sports.len()
            )));
        }
        let mut notes = Vec::new();
        let mut ks = |sample: &[f64], genre: &str| match ks_normality(sample) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("{genre} normality: {e}"));
                None
            }
        };
        let ks_action = ks(&action, "action");
        let ks_sports = ks(&sports, "sports");
        let t = match t_test(&action, &sports, kind) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("t-test: {e}"));
                None
            }
        };
        rows.push(AttributeComparison {
            attribute: attr,
            n_action: action.len(),
            n_sports: sports.len(),
            mean_action: stats::mean(&action),
            mean_sports: stats::mean(&sports),
            ks_action,
            ks_sports,
            t_test: t,
            reject: false,
            notes,
        });
    }

    let tested: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].t_test.is_some()).collect();
    let p_values: Vec<f64> = tested
        .iter()
        .map(|&i| rows[i].t_test.as_ref().unwrap().p_value)
        .collect();
    let decisions = bonferroni(&p_values, alpha)?;
    let corrected_alpha = alpha / p_values.len().max(1) as f64;
    for (&i, reject) in tested.iter().zip(decisions) {
        rows[i].reject = reject;
        if let Some(t) = rows[i].t_test.as_mut() {
            t.corrected_alpha = Some(corrected_alpha);
        }
    }
    Ok(GenreComparison {
        alpha,
        corrected_alpha,
        rows,
    })
}

impl GenreComparison {
    pub fn row(&self, attribute: Attribute) -> Option<&AttributeComparison> {
        self.rows.iter().find(|r| r.attribute == attribute)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "attribute",
            "n_action",
            "n_sports",
            "mean_action",
            "mean_sports",
            "ks_p_action",
            "ks_p_sports",
            "t_statistic",
            "p_value",
            "cohens_d",
            "corrected_alpha",
            "reject",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.attribute.to_string(),
                r.n_action.to_string(),
                r.n_sports.to_string(),
                format!("{:.6}", r.mean_action),
                format!("{:.6}", r.mean_sports),
                opt(r.ks_action.as_ref().map(|k| k.p_value)),
                opt(r.ks_sports.as_ref().map(|k| k.p_value)),
                opt(r.t_test.as_ref().map(|t| t.statistic)),
                opt(r.t_test.as_ref().map(|t| t.p_value)),
                opt(r.t_test.as_ref().and_then(|t| t.effect_size)),
                format!("{:.6}", self.corrected_alpha),
                r.reject.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
