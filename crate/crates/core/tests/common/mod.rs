//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;

use bugscope::codebook::{Codebook, CodebookMode, IdfForm};
use bugscope::embedding::{EmbeddingDataset, FrameEmbedding, TextEmbedding, FRAME_DIM, TEXT_DIM};
use bugscope::segmentation::{Label, Segment};

/// Gap count by run-length encoding: every run of clean segments that is
/// neither the first nor the last run is bounded by bugs on both sides.
pub fn gaps_rle(seq: &[bool]) -> usize {
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for &b in seq {
        match runs.last_mut() {
            Some((v, n)) if *v == b => *n += 1,
            _ => runs.push((b, 1)),
        }
    }
    let n = runs.len();
    runs.iter()
        .enumerate()
        .filter(|&(i, &(buggy, _))| !buggy && i > 0 && i + 1 < n)
        .count()
}

/// Centroid index per frame of the TF-IDF fixture: 3 videos x 4 segments x
/// 4 frames over k = 4 clusters.
pub const TFIDF_MATCHES: [[[usize; 4]; 4]; 3] = [
    [[0, 0, 0, 1], [0, 0, 1, 1], [2, 2, 2, 2], [0, 1, 2, 0]],
    [[1, 1, 1, 1], [3, 0, 0, 0], [2, 1, 0, 0], [0, 0, 0, 0]],
    [[1, 2, 1, 2], [1, 1, 1, 1], [0, 0, 0, 2], [1, 1, 0, 0]],
];

fn basis(i: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; FRAME_DIM];
    v[i] = scale;
    v
}

/// Dataset whose frames point straight at the intended centroid (with a
/// varying length, which cosine matching must ignore) and the codebook of
/// the four axis directions.
pub fn tfidf_fixture() -> (EmbeddingDataset, Codebook) {
    let mut segments = Vec::new();
    let mut frames = Vec::new();
    let mut texts = Vec::new();
    for (v, video) in TFIDF_MATCHES.iter().enumerate() {
        let video_id = format!("v{v}");
        for (s, matches) in video.iter().enumerate() {
            segments.push(Segment {
                video_id: video_id.clone(),
                index: s,
                start: 4.0 * s as f64,
                end: 4.0 * (s + 1) as f64,
                text: String::new(),
                label: Some(Label::Clean),
            });
            for (offset, &c) in matches.iter().enumerate() {
                let mut vector = basis(c, 1.0 + offset as f64);
                // A small off-axis component keeps the match unambiguous.
                vector[(c + 1) % 4] = 0.01;
                frames.push(FrameEmbedding {
                    video_id: video_id.clone(),
                    segment_index: s,
                    second_offset: offset,
                    vector,
                });
            }
            texts.push(TextEmbedding {
                video_id: video_id.clone(),
                segment_index: s,
                vector: vec![0.0; TEXT_DIM],
            });
        }
    }
    let dataset = EmbeddingDataset::new(segments, frames, texts).expect("fixture is valid");
    let centroids = (0..4).map(|i| basis(i, 1.0)).collect();
    let codebook = Codebook::new(CodebookMode::Automatic, 0, centroids).expect("valid codebook");
    (dataset, codebook)
}

/// Hand computation of the TF-IDF rows of [`TFIDF_MATCHES`].
pub fn tfidf_oracle(form: IdfForm) -> Vec<Vec<f64>> {
    let k = 4;
    let mut m = vec![0usize; k];
    let mut total = 0usize;
    for video in &TFIDF_MATCHES {
        for seg in video {
            for &c in seg {
                m[c] += 1;
                total += 1;
            }
        }
    }
    let f = total as f64;
    let idf: Vec<f64> = m
        .iter()
        .map(|&mc| match form {
            IdfForm::Raw => f / (mc.max(1) as f64),
            IdfForm::Smooth => ((1.0 + f) / (1.0 + mc as f64)).ln() + 1.0,
        })
        .collect();
    let mut rows = Vec::new();
    for video in &TFIDF_MATCHES {
        for seg in video {
            let row = (0..k)
                .map(|c| seg.iter().filter(|&&x| x == c).count() as f64 / seg.len() as f64 * idf[c])
                .collect();
            rows.push(row);
        }
    }
    rows
}

/// Exhaustive cosine scan: first index with the maximal similarity, zero
/// norms scoring 0.
pub fn cosine_oracle(frame: &[f64], centroids: &[Vec<f64>]) -> usize {
    let sims: Vec<f64> = centroids
        .iter()
        .map(|c| {
            let nf = frame.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nf == 0.0 || nc == 0.0 {
                0.0
            } else {
                frame.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() / (nf * nc)
            }
        })
        .collect();
    let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    sims.iter().position(|&s| s == max).unwrap()
}

/// Brute-force k-NN vote: sort every training row by (distance, index).
pub fn knn_oracle(rows: &[Vec<f64>], labels: &[bool], query: &[f64], k: usize) -> f64 {
    let mut order: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order[..k].iter().filter(|&&(_, i)| labels[i]).count() as f64 / k as f64
}

/// Density of Student's t with 8 degrees of freedom:
/// `Gamma(9/2) / (sqrt(8 pi) Gamma(4)) * (1 + t^2/8)^(-9/2)`.
pub fn t8_pdf(t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let gamma_9_2 = 3.5 * 2.5 * 1.5 * 0.5 * pi.sqrt();
    let gamma_4 = 6.0;
    gamma_9_2 / ((8.0 * pi).sqrt() * gamma_4) * (1.0 + t * t / 8.0).powf(-4.5)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Textbook two-sample t for a=(1,2,3,4,5), b=(3,4,5,6,7): means 3 and 5,
/// both variances 2.5, standard error sqrt(2.5/5 + 2.5/5) = 1, so t = -2 on
/// 8 degrees of freedom (Welch and pooled agree for equal sizes and
/// variances). Returns `(t, two-sided p)`.
pub fn textbook_t_fixture() -> (f64, f64) {
    let t: f64 = -2.0;
    let central = simpson(t8_pdf, 0.0, t.abs(), 20_000);
    (t, 2.0 * (0.5 - central))
}

/// SRT document for the given cue intervals in milliseconds.
pub fn srt_document(cues: &[(u64, u64, String)]) -> String {
    fn stamp(ms: u64) -> String {
        format!(
            "{:02}:{:02}:{:02},{:03}",
            ms / 3_600_000,
            ms / 60_000 % 60,
            ms / 1000 % 60,
            ms % 1000
        )
    }
    let mut out = String::new();
    for (i, (a, b, text)) in cues.iter().enumerate() {
        let _ = write!(out, "{}\n{} --> {}\n{}\n\n", i + 1, stamp(*a), stamp(*b), text);
    }
    out
}
