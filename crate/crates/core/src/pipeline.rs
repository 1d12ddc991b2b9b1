//! Stage composition shared by the subcommands and the full `run`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, genre_comparison, video_attributes, GenreComparison, VideoAttributes};
use crate::classify::protocol::{evaluate_all, run_protocol, subset_run, TrainedSet};
use crate::classify::{
    load_model, save_model, DataSplit, EvaluationReport, FeatureMatrix, ModelKind,
};
use crate::codebook::{
    kmeans_codebook, manual_codebook, read_designations, tfidf_features, Codebook, CodebookMode,
    Designations, IdfForm,
};
use crate::config::{FileDigest, Manifest, RunConfig};
use crate::embedding::{load_embeddings, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::segmentation::{
    attach_labels, parse_transcript, read_labels, read_meta, segment_video, write_segments,
    Segment, SegmentKey, TranscriptFormat, VideoMeta,
};
use crate::seeds;
use crate::text::{assemble_features, write_features, SegmentFeatures, Standardizer};

const TRANSCRIPT_EXTENSIONS: [&str; 3] = ["srt", "vtt", "tsv"];

/// The transcript of `video_id` in `dir`, trying `.srt`, `.vtt` then `.tsv`.
pub fn find_transcript(dir: &Path, video_id: &str) -> Result<(PathBuf, TranscriptFormat)> {
    for ext in TRANSCRIPT_EXTENSIONS {
        let path = dir.join(format!("{video_id}.{ext}"));
        if path.is_file() {
            let format = TranscriptFormat::from_extension(&path).expect("known extension");
            return Ok((path, format));
        }
    }
    Err(Error::MissingArtifact(dir.join(format!("{video_id}.{{srt,vtt,tsv}}"))))
}

/// Segments every video of `metas`, in metadata order.
pub fn segment_corpus(transcripts: &Path, metas: &[VideoMeta]) -> Result<Vec<Segment>> {
    let per_video = metas
        .par_iter()
        .map(|meta| {
            let (path, format) = find_transcript(transcripts, &meta.video_id)?;
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let cues = parse_transcript(&raw, format, meta.duration).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?;
            segment_video(&cues, meta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

/// Segments the corpus and attaches labels when a label file is given.
pub fn load_segments(transcripts: &Path, meta: &Path, labels: Option<&Path>) -> Result<(Vec<VideoMeta>, Vec<Segment>)> {
    let metas = read_meta(meta)?;
    let mut segments = segment_corpus(transcripts, &metas)?;
    if let Some(labels) = labels {
        segments = attach_labels(segments, &read_labels(labels)?)?;
    }
    info!("{} videos, {} segments", metas.len(), segments.len());
    Ok((metas, segments))
}

pub fn log_warnings(warnings: &[String]) {
    for w in warnings {
        warn!("{w}");
    }
}

/// Builds the codebook of the configured mode; the automatic one clusters
/// every frame of the dataset.
pub fn build_codebook(
    dataset: &EmbeddingDataset,
    mode: CodebookMode,
    k: usize,
    root_seed: u64,
    designations: Option<&Designations>,
) -> Result<Codebook> {
    match mode {
        CodebookMode::Automatic => {
            let points: Vec<&[f64]> = dataset.frames().iter().map(|f| f.vector.as_slice()).collect();
            let seed = seeds::derive_seed(root_seed, seeds::STAGE_CODEBOOK);
            let (codebook, report) = kmeans_codebook(&points, k, seed)?;
            info!(
                "k-means: k={k}, {} frames, {} iterations, inertia {:.4}",
                points.len(),
                report.iterations,
                report.inertia.last().copied().unwrap_or(f64::NAN)
            );
            Ok(codebook)
        }
        CodebookMode::Manual => {
            let designations = designations
                .ok_or_else(|| Error::Config("manual codebook needs a designations file".into()))?;
            let codebook = manual_codebook(dataset, designations)?;
            info!("manual codebook with {} clusters", codebook.k());
            Ok(codebook)
        }
    }
}

/// TF-IDF visual block joined with the text block for each labeled segment.
pub fn featurize(dataset: &EmbeddingDataset, codebook: &Codebook, idf: IdfForm) -> Vec<SegmentFeatures> {
    let (visual, warnings) = tfidf_features(dataset, codebook, idf);
    log_warnings(&warnings);
    let assembled = assemble_features(&visual, dataset.texts(), dataset.segments());
    log_warnings(&assembled.warnings);
    info!("{} labeled feature rows", assembled.features.len());
    assembled.features
}

/// Attributes of every fully labeled video, in metadata order.
pub fn corpus_attributes(segments: &[Segment], metas: &[VideoMeta]) -> Result<Vec<VideoAttributes>> {
    let mut by_video: BTreeMap<&str, Vec<Segment>> = BTreeMap::new();
    for s in segments {
        by_video.entry(s.video_id.as_str()).or_default().push(s.clone());
    }
    let results: Vec<Option<VideoAttributes>> = metas
        .par_iter()
        .map(|m| {
            let segs = by_video.get(m.video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            if segs.is_empty() || segs.iter().any(|s| s.label.is_none()) {
                return Ok(None);
            }
            video_attributes(segs, m).map(Some)
        })
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} videos are not fully labeled; no attributes for them");
    }
    Ok(results.into_iter().flatten().collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PartRow {
    video_id: String,
    segment_index: usize,
    part: String,
}

const SPLIT_FILE: &str = "split.csv";
const STANDARDIZER_FILE: &str = "standardizer.json";

pub fn model_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("{}.json", kind.file_stem()))
}

/// Writes every model, the split membership and the standardizer (if any).
pub fn save_trained(dir: &Path, set: &TrainedSet, data: &DataSplit) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for model in &set.models {
        let path = model_path(dir, model.kind());
        save_model(&path, model, set.dim)?;
        written.push(path);
    }
    let split_path = dir.join(SPLIT_FILE);
    let mut w = csv::Writer::from_path(&split_path)?;
    for (part, rows) in [("train", &data.train), ("validation", &data.validation), ("test", &data.test)] {
        for f in rows {
            w.serialize(PartRow {
                video_id: f.key.video_id.clone(),
                segment_index: f.key.index,
                part: part.to_string(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&split_path, e))?;
    written.push(split_path);
    if let Some(s) = &set.standardizer {
        let path = dir.join(STANDARDIZER_FILE);
        std::fs::write(&path, serde_json::to_string(s)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Loads what [`save_trained`] wrote, plus the keys of the test part.
pub fn load_trained(dir: &Path) -> Result<(TrainedSet, BTreeSet<SegmentKey>)> {
    let mut models = Vec::new();
    let mut dim = None;
    for kind in ModelKind::ALL {
        let (model, d) = load_model(&model_path(dir, kind))?;
        if dim.is_some_and(|x| x != d) {
            return Err(Error::Data(format!("models in {} disagree on dimension", dir.display())));
        }
        dim = Some(d);
        models.push(model);
    }
    let split_path = dir.join(SPLIT_FILE);
    if !split_path.exists() {
        return Err(Error::MissingArtifact(split_path));
    }
    let mut test = BTreeSet::new();
    for row in csv::Reader::from_path(&split_path)?.deserialize() {
        let row: PartRow = row?;
        if row.part == "test" {
            test.insert(SegmentKey::new(row.video_id, row.segment_index));
        }
    }
    let std_path = dir.join(STANDARDIZER_FILE);
    let standardizer: Option<Standardizer> = if std_path.exists() {
        let raw = std::fs::read_to_string(&std_path).map_err(|e| Error::io(&std_path, e))?;
        Some(serde_json::from_str(&raw)?)
    } else {
        None
    };
    let set = TrainedSet {
        validation_f1: Vec::new(),
        models,
        standardizer,
        dim: dim.unwrap_or(0),
    };
    Ok((set, test))
}

/// Test-part probabilities of every model, one row per segment.
pub fn write_predictions(path: &Path, set: &TrainedSet, test: &[SegmentFeatures]) -> Result<()> {
    let matrix = set.prepare(&FeatureMatrix::from_features(test));
    let probs: Vec<Vec<f64>> = set.models.iter().map(|m| m.predict_all(&matrix)).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["video_id".to_string(), "segment_index".into(), "label".into()];
    header.extend(set.models.iter().map(|m| m.kind().file_stem().to_string()));
    w.write_record(&header)?;
    for (i, f) in test.iter().enumerate() {
        let mut rec = vec![f.key.video_id.clone(), f.key.index.to_string(), f.label.flag().to_string()];
        rec.extend(probs.iter().map(|p| format!("{:.6}", p[i])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_comparison(csv_path: &Path, json_path: &Path, comparison: &GenreComparison) -> Result<()> {
    comparison.write_csv(csv_path)?;
    let json = serde_json::to_string_pretty(comparison)?;
    std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// What a full run produced.
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub subset_reports: Vec<EvaluationReport>,
    pub comparison: Option<GenreComparison>,
    pub manifest: Manifest,
}

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

/// Every stage end to end: segmentation, embeddings, codebook, features,
/// the classifier protocol (full set and subsets), attributes and the genre
/// comparison. All outputs go under `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let d = &config.data;

    let (metas, segments) = load_segments(&d.transcripts, &d.meta, Some(&d.labels))?;
    let dataset = load_embeddings(&d.frames, &d.texts, segments.clone())?;
    log_warnings(dataset.warnings());
    let designations = d.designations.as_deref().map(read_designations).transpose()?;
    let codebook = build_codebook(
        &dataset,
        config.codebook.mode,
        config.codebook.k,
        config.seed,
        designations.as_ref(),
    )?;
    let features = featurize(&dataset, &codebook, config.codebook.idf);

    let protocol = config.protocol();
    let full = run_protocol(&features, "full", &protocol)?;
    let mut subset_reports = Vec::new();
    for filter in config.subsets.filters()? {
        info!("subset {filter}");
        match subset_run(&features, &metas, &filter, &protocol) {
            Ok(r) => subset_reports.push(r),
            Err(Error::Data(msg)) => warn!("subset {filter} skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }

    let attributes = corpus_attributes(&segments, &metas)?;
    let comparison = match genre_comparison(&attributes, &metas, config.stats.alpha, config.stats.t_test) {
        Ok(c) => Some(c),
        Err(e @ Error::Data(_)) => {
            warn!("genre comparison skipped: {e}");
            None
        }
        Err(e) => return Err(e),
    };

    // Outputs, written in a fixed order.
    let mut artifacts: Vec<PathBuf> = save_trained(&out.join("models"), &full.trained, &full.split)?
        .into_iter()
        .map(|p| p.strip_prefix(out).unwrap_or(&p).to_path_buf())
        .collect();
    let mut put = |name: &str| {
        artifacts.push(PathBuf::from(name));
        out.join(name)
    };
    write_segments(&put("segments.csv"), dataset.segments())?;
    codebook.save(&put("codebook.json"))?;
    write_features(&put("features.jsonl"), codebook.k(), &features)?;
    write_predictions(&put("predictions.csv"), &full.trained, &full.split.test)?;
    full.report.write_csv(&put(REPORT_CSV))?;
    let mut text = full.report.to_table();
    if !subset_reports.is_empty() {
        let subsets_dir = out.join("subsets");
        std::fs::create_dir_all(&subsets_dir).map_err(|e| Error::io(&subsets_dir, e))?;
        for r in &subset_reports {
            r.write_csv(&put(&format!("subsets/{}.csv", slug(&r.dataset))))?;
            text.push('\n');
            text.push_str(&r.to_table());
        }
    }
    let txt = put(REPORT_TXT);
    std::fs::write(&txt, text).map_err(|e| Error::io(&txt, e))?;
    analytics::attributes::write_attributes(&put("attributes.csv"), &attributes)?;
    if let Some(c) = &comparison {
        write_comparison(&put("stats.csv"), &put("stats.json"), c)?;
    }

    let mut inputs = Vec::new();
    for p in [&d.meta, &d.labels, &d.frames, &d.texts] {
        inputs.push(FileDigest::of(p, p)?);
    }
    if let Some(p) = &d.designations {
        inputs.push(FileDigest::of(p, p)?);
    }
    for m in &metas {
        let (p, _) = find_transcript(&d.transcripts, &m.video_id)?;
        inputs.push(FileDigest::of(&p, &p)?);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.hash(),
        config: config.clone(),
        root_seed: config.seed,
        stage_seeds: config.stage_seeds(),
        inputs,
        artifacts: artifacts
            .iter()
            .map(|a| FileDigest::of(&out.join(a), a))
            .collect::<Result<_>>()?,
    };
    manifest.save(&out.join(MANIFEST))?;

    Ok(RunOutcome {
        report: full.report,
        subset_reports,
        comparison,
        manifest,
    })
}

/// Re-runs the config recorded in a manifest, optionally into another
/// directory, and checks that every artifact came out identical.
pub fn replay(manifest_path: &Path, output_dir: Option<&Path>) -> Result<RunOutcome> {
    let recorded = Manifest::load(manifest_path)?;
    recorded.check_replayable()?;
    let mut config = recorded.config.clone();
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    let outcome = run(&config)?;
    let now: BTreeMap<&Path, &str> = outcome
        .manifest
        .artifacts
        .iter()
        .map(|a| (a.path.as_path(), a.sha256.as_str()))
        .collect();
    let differing: Vec<String> = recorded
        .artifacts
        .iter()
        .filter(|a| now.get(a.path.as_path()) != Some(&a.sha256.as_str()))
        .map(|a| a.path.display().to_string())
        .collect();
    if !differing.is_empty() {
        return Err(Error::Integrity(format!(
            "replay differs from the recorded run in: {}",
            differing.join(", ")
        )));
    }
    Ok(outcome)
}

/// Scores saved models on the test part recorded at training time.
pub fn evaluate_saved(models_dir: &Path, features: &[SegmentFeatures], dataset: &str) -> Result<EvaluationReport> {
    let (set, test_keys) = load_trained(models_dir)?;
    let test: Vec<SegmentFeatures> = features
        .iter()
        .filter(|f| test_keys.contains(&f.key))
        .cloned()
        .collect();
    if test.len() != test_keys.len() {
        return Err(Error::Integrity(format!(
            "{} of {} test segments are missing from the features",
            test_keys.len() - test.len(),
            test_keys.len()
        )));
    }
    if let Some(f) = test.first() {
        if f.len() != set.dim {
            return Err(Error::Dimension {
                record: f.key.to_string(),
                expected: set.dim,
                found: f.len(),
            });
        }
    }
    evaluate_all(&set, &test, dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("genre=Sports"), "genre_sports");
        assert_eq!(slug("game=FIFA 17"), "game_fifa_17");
    }

    #[test]
    fn missing_transcript_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        match find_transcript(dir.path(), "v9") {
            Err(Error::MissingArtifact(p)) => assert!(p.to_string_lossy().contains("v9")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
