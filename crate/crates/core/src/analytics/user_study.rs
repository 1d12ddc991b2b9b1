//! Mapping participant-reported bug windows onto segments and comparing the
//! resulting attributes with the pipeline's.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attributes::{attributes_from_flags, VideoAttributes};
use super::stats::mean;
use crate::error::{Error, Result};
use crate::segmentation::{csv_reader, Segment, VideoMeta};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserWindow {
    pub participant_id: String,
    pub video_id: String,
    pub start: f64,
    pub end: f64,
}

fn contains(outer: (f64, f64), inner: (f64, f64)) -> bool {
    outer.0 <= inner.0 + EPS && inner.1 <= outer.1 + EPS
}

/// Marks a segment buggy when it lies inside a reported window or a reported
/// window lies inside it. Partial overlap marks nothing.
pub fn map_user_windows(windows: &[UserWindow], segments: &[Segment], duration: f64) -> Result<Vec<bool>> {
    for w in windows {
        if !(w.start < w.end) || w.start < -EPS || w.end > duration + EPS {
            return Err(Error::Data(format!(
                "window [{}, {}] of participant {} lies outside video {} [0, {duration}]",
                w.start, w.end, w.participant_id, w.video_id
            )));
        }
    }
    Ok(segments
        .iter()
        .map(|s| {
            let seg = (s.start, s.end);
            windows.iter().any(|w| {
                let win = (w.start, w.end);
                contains(win, seg) || contains(seg, win)
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantAttributes {
    pub participant_id: String,
    pub attributes: VideoAttributes,
}

/// Attributes for every (participant, video) pair present in `windows`.
pub fn participant_attributes(
    windows: &[UserWindow],
    segments: &[Segment],
    metas: &[VideoMeta],
) -> Result<Vec<ParticipantAttributes>> {
    let mut grouped: BTreeMap<(&str, &str), Vec<UserWindow>> = BTreeMap::new();
    for w in windows {
        grouped
            .entry((w.participant_id.as_str(), w.video_id.as_str()))
            .or_default()
            .push(w.clone());
    }
    let mut out = Vec::new();
    for ((participant, video), ws) in grouped {
        let meta = metas
            .iter()
            .find(|m| m.video_id == video)
            .ok_or_else(|| Error::Integrity(format!("window references unknown video {video}")))?;
        let mut segs: Vec<&Segment> = segments.iter().filter(|s| s.video_id == video).collect();
        segs.sort_by_key(|s| s.index);
        let segs: Vec<Segment> = segs.into_iter().cloned().collect();
        let flags = map_user_windows(&ws, &segs, meta.duration)?;
        let starts: Vec<f64> = segs.iter().map(|s| s.start).collect();
        out.push(ParticipantAttributes {
            participant_id: participant.to_string(),
            attributes: attributes_from_flags(video, &flags, &starts, meta.duration),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStudyRow {
    pub video_id: String,
    pub participants: usize,
    pub user_buggy_ratio: f64,
    pub pipeline_buggy_ratio: f64,
    /// Mean over participants who reported at least one bug.
    pub user_start_time_ratio: Option<f64>,
    pub pipeline_start_time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStudySummary {
    pub rows: Vec<UserStudyRow>,
    /// Means over the selected videos.
    pub overall: UserStudyRow,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Per-video participant means of buggy ratio and start time ratio next to
/// the pipeline's values.
pub fn user_study_summary(
    participants: &[ParticipantAttributes],
    pipeline: &[VideoAttributes],
    selected: &[String],
) -> Result<UserStudySummary> {
    let mut rows = Vec::with_capacity(selected.len());
    for video in selected {
        let users: Vec<&VideoAttributes> = participants
            .iter()
            .filter(|p| &p.attributes.video_id == video)
            .map(|p| &p.attributes)
            .collect();
        if users.is_empty() {
            return Err(Error::Data(format!("video {video} has no participant input")));
        }
        let pipe = pipeline
            .iter()
            .find(|a| &a.video_id == video)
            .ok_or_else(|| Error::Data(format!("no pipeline attributes for video {video}")))?;
        rows.push(UserStudyRow {
            video_id: video.clone(),
            participants: users.len(),
            user_buggy_ratio: mean_of(users.iter().map(|a| a.buggy_ratio)).unwrap_or(0.0),
            pipeline_buggy_ratio: pipe.buggy_ratio,
            user_start_time_ratio: mean_of(users.iter().filter_map(|a| a.start_time_ratio)),
            pipeline_start_time_ratio: pipe.start_time_ratio,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("no videos selected for the user study".into()));
    }
    let overall = UserStudyRow {
        video_id: "overall".into(),
        participants: rows.iter().map(|r| r.participants).max().unwrap_or(0),
        user_buggy_ratio: mean_of(rows.iter().map(|r| r.user_buggy_ratio)).unwrap_or(0.0),
        pipeline_buggy_ratio: mean_of(rows.iter().map(|r| r.pipeline_buggy_ratio)).unwrap_or(0.0),
        user_start_time_ratio: mean_of(rows.iter().filter_map(|r| r.user_start_time_ratio)),
        pipeline_start_time_ratio: mean_of(rows.iter().filter_map(|r| r.pipeline_start_time_ratio)),
    };
    Ok(UserStudySummary { rows, overall })
}

impl UserStudySummary {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "video_id",
            "participants",
            "user_buggy_ratio",
            "pipeline_buggy_ratio",
            "user_start_time_ratio",
            "pipeline_start_time_ratio",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            w.write_record([
                r.video_id.clone(),
                r.participants.to_string(),
                format!("{:.4}", r.user_buggy_ratio),
                format!("{:.4}", r.pipeline_buggy_ratio),
                opt(r.user_start_time_ratio),
                opt(r.pipeline_start_time_ratio),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Deserialize)]
struct WindowRow {
    participant_id: String,
    video_id: String,
    start_seconds: f64,
    end_seconds: f64,
}

pub fn read_windows(path: &Path) -> Result<Vec<UserWindow>> {
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: WindowRow = row?;
        if !(row.start_seconds < row.end_seconds) {
            return Err(Error::Data(format!(
                "window of participant {} on {} has start >= end",
                row.participant_id, row.video_id
            )));
        }
        out.push(UserWindow {
            participant_id: row.participant_id,
            video_id: row.video_id,
            start: row.start_seconds,
            end: row.end_seconds,
        });
    }
    Ok(out)
}
