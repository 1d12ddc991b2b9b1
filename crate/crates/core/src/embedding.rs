//! Per-frame visual and per-segment text embeddings.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::{Segment, SegmentKey};
use crate::seeds;
use crate::text::fallback_text_encode;

pub const FRAME_DIM: usize = 64;
pub const TEXT_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEmbedding {
    pub video_id: String,
    pub segment_index: usize,
    /// Whole seconds from the start of the segment.
    pub second_offset: usize,
    pub vector: Vec<f64>,
}

impl FrameEmbedding {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(self.video_id.clone(), self.segment_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub video_id: String,
    pub segment_index: usize,
    pub vector: Vec<f64>,
}

impl TextEmbedding {
    pub fn key(&self) -> SegmentKey {
        SegmentKey::new(self.video_id.clone(), self.segment_index)
    }
}

/// Validated embeddings together with the segments they describe.
///
/// Immutable once built; frames of a segment are served in offset order.
#[derive(Debug, Clone)]
pub struct EmbeddingDataset {
    segments: Vec<Segment>,
    frames: Vec<FrameEmbedding>,
    texts: Vec<TextEmbedding>,
    frame_index: BTreeMap<SegmentKey, Vec<usize>>,
    text_index: BTreeMap<SegmentKey, usize>,
    warnings: Vec<String>,
}

impl PartialEq for EmbeddingDataset {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments && self.frames == other.frames && self.texts == other.texts
    }
}

impl EmbeddingDataset {
    pub fn new(
        segments: Vec<Segment>,
        frames: Vec<FrameEmbedding>,
        texts: Vec<TextEmbedding>,
    ) -> Result<Self> {
        let mut seg_keys = BTreeMap::new();
        for (i, s) in segments.iter().enumerate() {
            if seg_keys.insert(s.key(), i).is_some() {
                return Err(Error::Data(format!("duplicate segment {}", s.key())));
            }
        }

        let mut frame_index: BTreeMap<SegmentKey, Vec<usize>> = BTreeMap::new();
        let mut dangling = Vec::new();
        for (i, f) in frames.iter().enumerate() {
            let record = || format!("frame {}@{}", f.key(), f.second_offset);
            check_vector(&f.vector, FRAME_DIM, record)?;
            let key = f.key();
            if !seg_keys.contains_key(&key) {
                dangling.push(record());
                continue;
            }
            frame_index.entry(key).or_default().push(i);
        }
        for t in &texts {
            check_vector(&t.vector, TEXT_DIM, || format!("text {}", t.key()))?;
            if !seg_keys.contains_key(&t.key()) {
                dangling.push(format!("text {}", t.key()));
            }
        }
        if !dangling.is_empty() {
            return Err(Error::Integrity(format!(
                "records reference missing segments: {}",
                dangling.join(", ")
            )));
        }

        for (key, idx) in frame_index.iter_mut() {
            idx.sort_by_key(|&i| frames[i].second_offset);
            if let Some(w) = idx
                .windows(2)
                .find(|w| frames[w[0]].second_offset == frames[w[1]].second_offset)
            {
                return Err(Error::Data(format!(
                    "duplicate frame {key}@{}",
                    frames[w[0]].second_offset
                )));
            }
        }

        let mut text_index = BTreeMap::new();
        for (i, t) in texts.iter().enumerate() {
            if text_index.insert(t.key(), i).is_some() {
                return Err(Error::Data(format!("duplicate text embedding {}", t.key())));
            }
        }

        let mut warnings = Vec::new();
        for s in &segments {
            let key = s.key();
            let count = frame_index.get(&key).map_or(0, Vec::len);
            let expected = s.expected_frames();
            if count == 0 {
                warnings.push(format!("segment {key} has no frames and is skipped"));
            } else if count != expected {
                warnings.push(format!(
                    "segment {key} has {count} frames, expected {expected} at 1 fps"
                ));
            }
            if s.label.is_some() && !text_index.contains_key(&key) {
                warnings.push(format!("labeled segment {key} has no text embedding"));
            }
        }

        Ok(Self {
            segments,
            frames,
            texts,
            frame_index,
            text_index,
            warnings,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn frames(&self) -> &[FrameEmbedding] {
        &self.frames
    }

    pub fn texts(&self) -> &[TextEmbedding] {
        &self.texts
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Frames of one segment in offset order.
    pub fn frames_of<'a>(&'a self, key: &SegmentKey) -> impl Iterator<Item = &'a FrameEmbedding> {
        self.frame_index
            .get(key)
            .into_iter()
            .flatten()
            .map(|&i| &self.frames[i])
    }

    pub fn frame_count(&self, key: &SegmentKey) -> usize {
        self.frame_index.get(key).map_or(0, Vec::len)
    }

    pub fn text_of(&self, key: &SegmentKey) -> Option<&TextEmbedding> {
        self.text_index.get(key).map(|&i| &self.texts[i])
    }

    pub fn write(&self, frame_file: &Path, text_file: &Path) -> Result<()> {
        write_jsonl(frame_file, &self.frames)?;
        write_jsonl(text_file, &self.texts)
    }
}

fn check_vector(v: &[f64], dim: usize, record: impl Fn() -> String) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Dimension {
            record: record(),
            expected: dim,
            found: v.len(),
        });
    }
    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!(
            "{} has non-finite component at {pos}",
            record()
        )));
    }
    Ok(())
}

pub fn load_embeddings(
    frame_file: &Path,
    text_file: &Path,
    segments: Vec<Segment>,
) -> Result<EmbeddingDataset> {
    let frames = read_jsonl(frame_file)?;
    let texts = read_jsonl(text_file)?;
    EmbeddingDataset::new(segments, frames, texts)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Unit vector along which buggy frames are shifted.
pub fn synthetic_bug_direction() -> Vec<f64> {
    vec![1.0 / (FRAME_DIM as f64).sqrt(); FRAME_DIM]
}

/// Deterministic stand-in for the neural encoders.
///
/// Each whole second of a labeled segment gets a standard normal frame vector,
/// shifted by `separation` along [`synthetic_bug_direction`] when the segment
/// is buggy. Text vectors come from [`fallback_text_encode`].
pub fn synthetic_embed(
    segments: Vec<Segment>,
    seed: u64,
    separation: f64,
) -> Result<EmbeddingDataset> {
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Parameter(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    if let Some(s) = segments.iter().find(|s| s.label.is_none()) {
        return Err(Error::Data(format!(
            "synthetic embedding needs labels; segment {} is unlabeled",
            s.key()
        )));
    }
    let direction = synthetic_bug_direction();
    let mut rng = seeds::rng(seed);
    let mut frames = Vec::new();
    let mut texts = Vec::with_capacity(segments.len());
    for s in &segments {
        let shift = if s.label.is_some_and(|l| l.is_buggy()) {
            separation
        } else {
            0.0
        };
        for offset in 0..s.expected_frames() {
            let vector = direction
                .iter()
                .map(|d| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift * d
                })
                .collect();
            frames.push(FrameEmbedding {
                video_id: s.video_id.clone(),
                segment_index: s.index,
                second_offset: offset,
                vector,
            });
        }
        texts.push(TextEmbedding {
            video_id: s.video_id.clone(),
            segment_index: s.index,
            vector: fallback_text_encode(&s.text, seed),
        });
    }
    EmbeddingDataset::new(segments, frames, texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::Label;

    fn segment(video: &str, index: usize, start: f64, end: f64, label: Option<Label>) -> Segment {
        Segment {
            video_id: video.into(),
            index,
            start,
            end,
            text: format!("segment {index}"),
            label,
        }
    }

    fn frame(video: &str, index: usize, offset: usize, dim: usize) -> FrameEmbedding {
        FrameEmbedding {
            video_id: video.into(),
            segment_index: index,
            second_offset: offset,
            vector: vec![offset as f64; dim],
        }
    }

    #[test]
    fn conforming_input_has_no_warnings() {
        let segs = vec![segment("v1", 0, 0.0, 7.0, Some(Label::Clean))];
        let frames = (0..7).map(|o| frame("v1", 0, o, FRAME_DIM)).collect();
        let texts = vec![TextEmbedding {
            video_id: "v1".into(),
            segment_index: 0,
            vector: vec![0.0; TEXT_DIM],
        }];
        let ds = EmbeddingDataset::new(segs, frames, texts).unwrap();
        assert_eq!(ds.frames().len(), 7);
        assert!(ds.warnings().is_empty(), "{:?}", ds.warnings());
    }

    #[test]
    fn short_vector_is_a_dimension_error() {
        let segs = vec![segment("v1", 0, 0.0, 7.0, None)];
        let err = EmbeddingDataset::new(segs, vec![frame("v1", 0, 2, 63)], vec![]).unwrap_err();
        match err {
            Error::Dimension { record, found, .. } => {
                assert_eq!(found, 63);
                assert!(record.contains("(v1,0)@2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_frame_is_integrity_error() {
        let segs = vec![segment("v1", 0, 0.0, 7.0, None)];
        let err = EmbeddingDataset::new(segs, vec![frame("v9", 0, 0, FRAME_DIM)], vec![]);
        assert!(matches!(err, Err(Error::Integrity(m)) if m.contains("(v9,0)")));
    }

    #[test]
    fn duplicates_and_non_finite_rejected() {
        let segs = vec![segment("v1", 0, 0.0, 7.0, None)];
        let dup = vec![frame("v1", 0, 1, FRAME_DIM), frame("v1", 0, 1, FRAME_DIM)];
        assert!(matches!(
            EmbeddingDataset::new(segs.clone(), dup, vec![]),
            Err(Error::Data(_))
        ));
        let mut bad = frame("v1", 0, 0, FRAME_DIM);
        bad.vector[5] = f64::NAN;
        assert!(matches!(
            EmbeddingDataset::new(segs, vec![bad], vec![]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn frame_count_mismatch_warns() {
        let segs = vec![
            segment("v1", 0, 0.0, 7.5, None),
            segment("v1", 1, 7.5, 15.0, None),
        ];
        let frames = (0..3).map(|o| frame("v1", 0, o, FRAME_DIM)).collect();
        let ds = EmbeddingDataset::new(segs, frames, vec![]).unwrap();
        assert_eq!(ds.warnings().len(), 2);
    }

    #[test]
    fn synthetic_requires_labels_and_is_deterministic() {
        let segs = vec![
            segment("v1", 0, 0.0, 6.0, Some(Label::Buggy)),
            segment("v1", 1, 6.0, 13.5, Some(Label::Clean)),
        ];
        let a = synthetic_embed(segs.clone(), 7, 4.0).unwrap();
        let b = synthetic_embed(segs.clone(), 7, 4.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames().len(), 6 + 7);
        assert_eq!(a.texts().len(), 2);

        let mut unlabeled = segs;
        unlabeled[1].label = None;
        assert!(synthetic_embed(unlabeled, 7, 4.0).is_err());
    }

    #[test]
    fn zero_separation_draws_same_distribution_for_both_labels() {
        // With no shift, a buggy and a clean segment of equal length consume the
        // same random stream positions, so swapping labels leaves frames alone.
        let segs = vec![
            segment("v1", 0, 0.0, 6.0, Some(Label::Buggy)),
            segment("v1", 1, 6.0, 12.0, Some(Label::Clean)),
        ];
        let mut swapped = segs.clone();
        swapped[0].label = Some(Label::Clean);
        swapped[1].label = Some(Label::Buggy);
        let a = synthetic_embed(segs, 3, 0.0).unwrap();
        let b = synthetic_embed(swapped, 3, 0.0).unwrap();
        assert_eq!(a.frames(), b.frames());
    }
}
