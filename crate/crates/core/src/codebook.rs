//! Bag-of-visual-words codebook, cosine frame assignment and TF-IDF weighting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingDataset, FRAME_DIM};
use crate::error::{Error, Result};
use crate::segmentation::{csv_reader, Label, SegmentKey};
use crate::seeds;

pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookMode {
    Automatic,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdfForm {
    /// `F_total / max(M(c), 1)`
    Raw,
    /// `ln((1 + F_total) / (1 + M(c))) + 1`
    #[default]
    Smooth,
}

impl IdfForm {
    pub fn weight(self, total_frames: usize, matches: usize) -> f64 {
        match self {
            IdfForm::Raw => total_frames as f64 / matches.max(1) as f64,
            IdfForm::Smooth => {
                ((1.0 + total_frames as f64) / (1.0 + matches as f64)).ln() + 1.0
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CodebookFile {
    mode: CodebookMode,
    k: usize,
    seed: u64,
    centroids: Vec<Vec<f64>>,
}

/// Visual-word centroids. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    mode: CodebookMode,
    seed: u64,
    centroids: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl Codebook {
    pub fn new(mode: CodebookMode, seed: u64, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.len() < 2 {
            return Err(Error::Parameter(format!(
                "a codebook needs at least 2 centroids, got {}",
                centroids.len()
            )));
        }
        let dim = centroids[0].len();
        for (i, c) in centroids.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Dimension {
                    record: format!("centroid {i}"),
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("centroid {i} is not finite")));
            }
        }
        let norms = centroids.iter().map(|c| norm(c)).collect();
        Ok(Self {
            mode,
            seed,
            centroids,
            norms,
        })
    }

    pub fn mode(&self) -> CodebookMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Index of the most cosine-similar centroid; lowest index wins ties and a
    /// zero-norm vector has similarity 0 with everything.
    pub fn assign(&self, frame: &[f64]) -> usize {
        let frame_norm = norm(frame);
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (i, (c, &cn)) in self.centroids.iter().zip(&self.norms).enumerate() {
            let sim = if frame_norm == 0.0 || cn == 0.0 {
                0.0
            } else {
                dot(frame, c) / (frame_norm * cn)
            };
            if sim > best_sim {
                best_sim = sim;
                best = i;
            }
        }
        best
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CodebookFile {
            mode: self.mode,
            k: self.k(),
            seed: self.seed,
            centroids: self.centroids.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CodebookFile = serde_json::from_str(&raw)?;
        if file.k != file.centroids.len() {
            return Err(Error::Data(format!(
                "codebook declares k={} but holds {} centroids",
                file.k,
                file.centroids.len()
            )));
        }
        Self::new(file.mode, file.seed, file.centroids)
    }
}

/// Free-function form of [`Codebook::assign`].
pub fn assign_frame(frame: &[f64], codebook: &Codebook) -> usize {
    codebook.assign(frame)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansReport {
    /// Inertia after each assignment step, ending with the final assignment.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub assignments: Vec<usize>,
}

/// Seeded k-means++ followed by Lloyd iterations on squared Euclidean distance.
///
/// Stops when no centroid moves more than [`KMEANS_TOLERANCE`] or after
/// [`KMEANS_MAX_ITERATIONS`]. An empty cluster is reseeded with the point
/// farthest from its current centroid.
pub fn kmeans_codebook(points: &[&[f64]], k: usize, seed: u64) -> Result<(Codebook, KMeansReport)> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
    }
    if points.len() < k {
        return Err(Error::Parameter(format!(
            "k-means needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let mut rng = seeds::rng(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut inertia = Vec::new();
    let mut iterations = 0;

    loop {
        let (mut assignments, mut dists) = assign_nearest(points, &centroids);
        let current: f64 = dists.iter().sum();
        debug_assert!(
            inertia
                .last()
                .is_none_or(|&prev: &f64| current <= prev + 1e-9 * prev.abs().max(1.0)),
            "k-means inertia increased"
        );
        inertia.push(current);
        if iterations == KMEANS_MAX_ITERATIONS {
            return finish(centroids, seed, inertia, iterations, assignments);
        }
        iterations += 1;

        reseed_empty(&mut assignments, &mut dists, k);

        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut movement: f64 = 0.0;
        for ((c, sum), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            let updated: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
            movement = movement.max(sq_dist(c, &updated).sqrt());
            *c = updated;
        }
        if movement < KMEANS_TOLERANCE {
            let (assignments, dists) = assign_nearest(points, &centroids);
            inertia.push(dists.iter().sum());
            return finish(centroids, seed, inertia, iterations, assignments);
        }
    }
}

fn finish(
    centroids: Vec<Vec<f64>>,
    seed: u64,
    inertia: Vec<f64>,
    iterations: usize,
    assignments: Vec<usize>,
) -> Result<(Codebook, KMeansReport)> {
    Ok((
        Codebook::new(CodebookMode::Automatic, seed, centroids)?,
        KMeansReport {
            inertia,
            iterations,
            assignments,
        },
    ))
}

fn kmeans_plus_plus(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].to_vec()];
    let mut min_d: Vec<f64> = points.par_iter().map(|p| sq_dist(p, points[first])).collect();
    while centroids.len() < k {
        let total: f64 = min_d.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in min_d.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the target past the last positive weight.
            pick.unwrap_or_else(|| min_d.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[chosen];
        min_d
            .par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(sq_dist(p, c)));
        centroids.push(c.to_vec());
    }
    centroids
}

fn assign_nearest(points: &[&[f64]], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            (best, best_d)
        })
        .unzip()
}

fn reseed_empty(assignments: &mut [usize], dists: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for (i, &d) in dists.iter().enumerate() {
            if counts[assignments[i]] > 1 && far.is_none_or(|f| d > dists[f]) {
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignments[i]] -= 1;
            counts[c] = 1;
            assignments[i] = c;
            dists[i] = 0.0;
        }
    }
}

/// Frame offset at which the bug first shows, per buggy segment.
pub type Designations = BTreeMap<SegmentKey, usize>;

/// One cluster per frame-bearing segment.
///
/// Buggy segments use their designated frame as centroid; every other segment
/// uses the mean of its frames.
pub fn manual_codebook(dataset: &EmbeddingDataset, designations: &Designations) -> Result<Codebook> {
    let mut centroids = Vec::new();
    let mut missing = Vec::new();
    let mut used = BTreeSet::new();
    for seg in dataset.segments() {
        let key = seg.key();
        let count = dataset.frame_count(&key);
        if count == 0 {
            continue;
        }
        if seg.label == Some(Label::Buggy) {
            let Some(&offset) = designations.get(&key) else {
                missing.push(key.to_string());
                continue;
            };
            let frame = dataset
                .frames_of(&key)
                .find(|f| f.second_offset == offset)
                .ok_or_else(|| {
                    Error::Integrity(format!("designated frame {key}@{offset} does not exist"))
                })?;
            used.insert(key);
            centroids.push(frame.vector.clone());
        } else {
            let mut mean = vec![0.0; FRAME_DIM];
            for f in dataset.frames_of(&key) {
                for (m, x) in mean.iter_mut().zip(&f.vector) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            centroids.push(mean);
        }
    }
    if !missing.is_empty() {
        return Err(Error::Integrity(format!(
            "buggy segments without a designated frame: {}",
            missing.join(", ")
        )));
    }
    let stray: Vec<String> = designations
        .keys()
        .filter(|k| !used.contains(*k))
        .map(ToString::to_string)
        .collect();
    if !stray.is_empty() {
        return Err(Error::Integrity(format!(
            "designations for segments that are not buggy frame-bearing segments: {}",
            stray.join(", ")
        )));
    }
    Codebook::new(CodebookMode::Manual, 0, centroids)
}

#[derive(Debug, Deserialize)]
struct DesignationRow {
    video_id: String,
    segment_index: usize,
    second_offset: usize,
}

pub fn read_designations(path: &Path) -> Result<Designations> {
    let mut reader = csv_reader(path)?;
    let mut out = Designations::new();
    for row in reader.deserialize() {
        let row: DesignationRow = row?;
        let key = SegmentKey::new(row.video_id, row.segment_index);
        if out.insert(key.clone(), row.second_offset).is_some() {
            return Err(Error::Data(format!("duplicate designation for {key}")));
        }
    }
    Ok(out)
}

pub fn write_designations(path: &Path, designations: &Designations) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["video_id", "segment_index", "second_offset"])?;
    for (k, off) in designations {
        w.write_record([k.video_id.clone(), k.index.to_string(), off.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// TF-IDF weights of each frame-bearing segment, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatures {
    pub k: usize,
    pub rows: Vec<(SegmentKey, Vec<f64>)>,
}

/// Term frequency is the share of a segment's frames assigned to a centroid;
/// document frequency counts matched frames over the whole corpus.
pub fn tfidf_features(
    dataset: &EmbeddingDataset,
    codebook: &Codebook,
    idf: IdfForm,
) -> (VisualFeatures, Vec<String>) {
    let k = codebook.k();
    let mut warnings = Vec::new();
    let keys: Vec<SegmentKey> = dataset
        .segments()
        .iter()
        .map(|s| s.key())
        .filter(|key| {
            let has = dataset.frame_count(key) > 0;
            if !has {
                warnings.push(format!("segment {key} has no frames; excluded"));
            }
            has
        })
        .collect();

    let counts: Vec<Vec<usize>> = keys
        .par_iter()
        .map(|key| {
            let mut c = vec![0usize; k];
            for f in dataset.frames_of(key) {
                c[codebook.assign(&f.vector)] += 1;
            }
            c
        })
        .collect();

    let mut matches = vec![0usize; k];
    for c in &counts {
        for (m, n) in matches.iter_mut().zip(c) {
            *m += n;
        }
    }
    let total: usize = matches.iter().sum();
    let idf_weights: Vec<f64> = matches.iter().map(|&m| idf.weight(total, m)).collect();

    let rows = keys
        .into_iter()
        .zip(counts)
        .map(|(key, c)| {
            let n: usize = c.iter().sum();
            let row = c
                .iter()
                .zip(&idf_weights)
                .map(|(&cnt, w)| cnt as f64 / n as f64 * w)
                .collect();
            (key, row)
        })
        .collect();
    (VisualFeatures { k, rows }, warnings)
}
