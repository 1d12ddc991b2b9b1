use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{csv_reader, csv_writer, Segment, VideoMeta};

/// Bug distribution of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAttributes {
    pub video_id: String,
    pub total_segments: usize,
    pub buggy_segments: usize,
    pub buggy_ratio: f64,
    /// Start of the first buggy segment over the video duration.
    pub start_time_ratio: Option<f64>,
    pub gaps: usize,
}

/// Maximal clean runs with a buggy segment on both sides.
pub fn count_gaps(buggy: &[bool]) -> usize {
    let mut seen_bug = false;
    let mut gaps = 0;
    for (i, &b) in buggy.iter().enumerate() {
        if b {
            if seen_bug && !buggy[i - 1] {
                gaps += 1;
            }
            seen_bug = true;
        }
    }
    gaps
}

/// Attributes from an ordered per-segment buggy flag sequence.
pub fn attributes_from_flags(
    video_id: &str,
    buggy: &[bool],
    starts: &[f64],
    duration: f64,
) -> VideoAttributes {
    let total = buggy.len();
    let count = buggy.iter().filter(|&&b| b).count();
    let first = buggy.iter().position(|&b| b);
    VideoAttributes {
        video_id: video_id.to_string(),
        total_segments: total,
        buggy_segments: count,
        buggy_ratio: if total == 0 {
            0.0
        } else {
            count as f64 / total as f64
        },
        start_time_ratio: first.map(|i| starts[i] / duration),
        gaps: count_gaps(buggy),
    }
}

/// Attributes of one fully labeled video; segments may come in any order.
pub fn video_attributes(segments: &[Segment], meta: &VideoMeta) -> Result<VideoAttributes> {
    let mut ordered: Vec<&Segment> = segments.iter().collect();
    ordered.sort_by_key(|s| s.index);
    let mut buggy = Vec::with_capacity(ordered.len());
    let mut starts = Vec::with_capacity(ordered.len());
    for s in ordered {
        if s.video_id != meta.video_id {
            return Err(Error::Data(format!(
                "segment {} does not belong to video {}",
                s.key(),
                meta.video_id
            )));
        }
        let label = s
            .label
            .ok_or_else(|| Error::Data(format!("segment {} is unlabeled", s.key())))?;
        buggy.push(label.is_buggy());
        starts.push(s.start);
    }
    Ok(attributes_from_flags(&meta.video_id, &buggy, &starts, meta.duration))
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeRow {
    video_id: String,
    total_segments: usize,
    buggy_segments: usize,
    buggy_ratio: f64,
    start_time_ratio: Option<f64>,
    gaps: usize,
}

pub fn write_attributes(path: &Path, attrs: &[VideoAttributes]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for a in attrs {
        w.serialize(AttributeRow {
            video_id: a.video_id.clone(),
            total_segments: a.total_segments,
            buggy_segments: a.buggy_segments,
            buggy_ratio: a.buggy_ratio,
            start_time_ratio: a.start_time_ratio,
            gaps: a.gaps,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_attributes(path: &Path) -> Result<Vec<VideoAttributes>> {
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: AttributeRow = row?;
        out.push(VideoAttributes {
            video_id: row.video_id,
            total_segments: row.total_segments,
            buggy_segments: row.buggy_segments,
            buggy_ratio: row.buggy_ratio,
            start_time_ratio: row.start_time_ratio,
            gaps: row.gaps,
        });
    }
    Ok(out)
}
