//! Transcript feature block and the assembled per-segment feature vectors.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::VisualFeatures;
use crate::embedding::{TextEmbedding, TEXT_DIM};
use crate::error::{Error, Result};
use crate::segmentation::{Label, Segment, SegmentKey};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashed bag-of-words projection of a transcript into 512 components.
///
/// Each lowercased whitespace token adds ±1 to two distinct buckets chosen by
/// a seeded FNV-1a hash; the sum is L2-normalized. Empty text maps to zeros.
pub fn fallback_text_encode(text: &str, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; TEXT_DIM];
    for token in text.split_whitespace() {
        let token = token.to_lowercase();
        let h1 = fnv1a(seed, token.as_bytes());
        let h2 = splitmix64(h1);
        let b1 = (h1 % TEXT_DIM as u64) as usize;
        let mut b2 = (h2 % TEXT_DIM as u64) as usize;
        if b2 == b1 {
            b2 = (b1 + 1) % TEXT_DIM;
        }
        v[b1] += if (h1 >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        v[b2] += if (h2 >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Visual TF-IDF block followed by the text block, with the segment label.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub key: SegmentKey,
    pub visual: Vec<f64>,
    pub text: Vec<f64>,
    pub label: Label,
}

impl SegmentFeatures {
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.visual.len() + self.text.len());
        v.extend_from_slice(&self.visual);
        v.extend_from_slice(&self.text);
        v
    }

    pub fn len(&self) -> usize {
        self.visual.len() + self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct Assembled {
    pub features: Vec<SegmentFeatures>,
    pub warnings: Vec<String>,
}

/// Concatenates the visual and text blocks of every labeled segment.
///
/// Labeled segments missing either block are skipped with a warning;
/// unlabeled segments are skipped silently.
pub fn assemble_features(
    visual: &VisualFeatures,
    texts: &[TextEmbedding],
    segments: &[Segment],
) -> Assembled {
    let text_by_key: BTreeMap<SegmentKey, &TextEmbedding> =
        texts.iter().map(|t| (t.key(), t)).collect();
    let visual_by_key: BTreeMap<&SegmentKey, &Vec<f64>> =
        visual.rows.iter().map(|(k, v)| (k, v)).collect();

    let mut out = Assembled::default();
    for seg in segments {
        let Some(label) = seg.label else { continue };
        let key = seg.key();
        let vis = visual_by_key.get(&key);
        let txt = text_by_key.get(&key);
        match (vis, txt) {
            (Some(vis), Some(txt)) => out.features.push(SegmentFeatures {
                key,
                visual: (*vis).clone(),
                text: txt.vector.clone(),
                label,
            }),
            (None, _) => out
                .warnings
                .push(format!("segment {key} has no visual features; excluded")),
            (_, None) => out
                .warnings
                .push(format!("segment {key} has no text embedding; excluded")),
        }
    }
    out
}

/// Train-set z-scoring applied to every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Data("cannot standardize an empty set".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    format: String,
    version: u32,
    k: usize,
    text_dim: usize,
    visual_block: [usize; 2],
    text_block: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    video_id: String,
    segment_index: usize,
    label: u8,
    visual: Vec<f64>,
    text: Vec<f64>,
}

const FEATURE_FORMAT: &str = "bugscope-features";

/// Writes features as JSON Lines; the first line records `k` and block bounds.
pub fn write_features(path: &Path, k: usize, features: &[SegmentFeatures]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = FeatureHeader {
        format: FEATURE_FORMAT.into(),
        version: 1,
        k,
        text_dim: TEXT_DIM,
        visual_block: [0, k],
        text_block: [k, k + TEXT_DIM],
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for f in features {
        serde_json::to_writer(
            &mut w,
            &FeatureRow {
                video_id: f.key.video_id.clone(),
                segment_index: f.key.index,
                label: f.label.flag(),
                visual: f.visual.clone(),
                text: f.text.clone(),
            },
        )?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a feature file, returning `k` and the rows.
pub fn read_features(path: &Path) -> Result<(usize, Vec<SegmentFeatures>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: FeatureHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: 1,
                message: format!("feature header: {e}"),
            })?
        }
        None => return Err(Error::Data(format!("{} is empty", path.display()))),
    };
    if header.format != FEATURE_FORMAT {
        return Err(Error::Data(format!(
            "{} is not a feature file",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: FeatureRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let key = SegmentKey::new(row.video_id, row.segment_index);
        if row.visual.len() != header.k || row.text.len() != header.text_dim {
            return Err(Error::Dimension {
                record: format!("features {key}"),
                expected: header.k + header.text_dim,
                found: row.visual.len() + row.text.len(),
            });
        }
        out.push(SegmentFeatures {
            key,
            visual: row.visual,
            text: row.text,
            label: Label::from_flag(row.label)?,
        });
    }
    Ok((header.k, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = fallback_text_encode("", 1);
        assert_eq!(v.len(), TEXT_DIM);
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(fallback_text_encode("  \t ", 1), v);
    }

    #[test]
    fn encoding_is_deterministic_and_case_insensitive() {
        assert_eq!(
            fallback_text_encode("Player clips through wall", 9),
            fallback_text_encode("player CLIPS through   wall", 9)
        );
    }

    #[test]
    fn repeated_token_is_parallel() {
        let once = fallback_text_encode("glitch", 3);
        let twice = fallback_text_encode("glitch glitch", 3);
        // One token touches exactly two buckets with unit magnitude.
        let nonzero: Vec<f64> = once.iter().copied().filter(|x| *x != 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!(nonzero.iter().all(|x| (x.abs() - 1.0 / 2f64.sqrt()).abs() < 1e-12));
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonempty_text_has_unit_norm() {
        for t in ["a", "the car flew into the sky", "ball stuck in goal post"] {
            assert!((norm(&fallback_text_encode(t, 5)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn assembly_concatenates_and_warns_on_missing_text() {
        let seg = |i: usize| Segment {
            video_id: "v".into(),
            index: i,
            start: i as f64 * 5.0,
            end: i as f64 * 5.0 + 5.0,
            text: String::new(),
            label: Some(Label::Buggy),
        };
        let visual = VisualFeatures {
            k: 4,
            rows: vec![
                (SegmentKey::new("v", 0), vec![1.0, 2.0, 3.0, 4.0]),
                (SegmentKey::new("v", 1), vec![0.0; 4]),
            ],
        };
        let t: Vec<f64> = (0..TEXT_DIM).map(|i| i as f64).collect();
        let texts = vec![TextEmbedding {
            video_id: "v".into(),
            segment_index: 0,
            vector: t.clone(),
        }];
        let out = assemble_features(&visual, &texts, &[seg(0), seg(1)]);
        assert_eq!(out.features.len(), 1);
        let values = out.features[0].values();
        assert_eq!(values.len(), 4 + TEXT_DIM);
        assert_eq!(&values[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&values[4..], t.as_slice());
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("(v,1)"));
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.apply(&rows[0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&rows[1]), vec![1.0, 0.0]);
    }
}
