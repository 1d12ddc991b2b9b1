//! Synthetic corpus generation.
//!
//! Writes a complete on-disk corpus: one TSV transcript per video, metadata,
//! labels, frame and text embeddings, designated frames and a demo run
//! configuration pointing at all of it. Labels follow a two-state Markov
//! chain per video (action videos are buggier than sports ones); buggy cue
//! text tends to mention bugs; buggy frames are shifted as described in
//! [`synthetic_embed`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::codebook::{write_designations, Designations};
use crate::config::RunConfig;
use crate::embedding::synthetic_embed;
use crate::error::{Error, Result};
use crate::pipeline::segment_corpus;
use crate::segmentation::{
    attach_labels, segment_video, write_labels, write_meta, Genre, Label, LabelTable, TranscriptCue,
    VideoMeta,
};
use crate::seeds;

const ACTION_GAMES: [&str; 3] = ["Grand Theft Auto V", "Red Dead Redemption 2", "Cyberpunk 2077"];
const SPORTS_GAMES: [&str; 3] = ["FIFA 17", "NBA 2K20", "Madden NFL 21"];

const NEUTRAL_WORDS: [&str; 24] = [
    "okay", "let's", "go", "nice", "shot", "run", "over", "there", "the", "ball", "car", "mission",
    "pass", "goal", "jump", "now", "we", "need", "to", "get", "this", "one", "come", "on",
];
const BUG_WORDS: [&str; 10] = [
    "glitch", "bug", "stuck", "clipping", "floating", "broken", "what", "wtf", "through", "frozen",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub seed: u64,
    /// Shift of buggy frames along the bug direction.
    pub separation: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_cue_gap: f64,
    pub max_cue_gap: f64,
    /// Chance that a buggy cue mentions a bug word.
    pub bug_word_rate: f64,
    /// Chance that a clean cue mentions one anyway.
    pub false_bug_word_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 50,
            seed: 42,
            separation: 4.0,
            min_duration: 140.0,
            max_duration: 260.0,
            min_cue_gap: 2.0,
            max_cue_gap: 14.0,
            bug_word_rate: 0.6,
            false_bug_word_rate: 0.1,
        }
    }
}

/// Markov transition probabilities `(clean -> buggy, buggy -> buggy)`.
fn transitions(genre: Genre) -> (f64, f64) {
    match genre {
        Genre::Action => (0.25, 0.7),
        _ => (0.15, 0.6),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub videos: usize,
    pub segments: usize,
    pub buggy_segments: usize,
    pub frames: usize,
    pub config_path: PathBuf,
}

fn cue_text(rng: &mut ChaCha8Rng, buggy: bool, config: &SynthConfig) -> String {
    let n = rng.random_range(3..=8);
    let mut words: Vec<&str> = (0..n).map(|_| *NEUTRAL_WORDS.choose(rng).unwrap()).collect();
    let rate = if buggy {
        config.bug_word_rate
    } else {
        config.false_bug_word_rate
    };
    if rng.random_bool(rate) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, BUG_WORDS.choose(rng).unwrap());
    }
    words.join(" ")
}

/// Writes a synthetic corpus under `out` and returns what it contains.
pub fn generate(out: &Path, config: &SynthConfig) -> Result<SynthSummary> {
    if config.videos < 2 {
        return Err(Error::Parameter("synthetic corpus needs at least 2 videos".into()));
    }
    if !(config.min_cue_gap > 0.0 && config.min_cue_gap <= config.max_cue_gap)
        || !(config.min_duration > 0.0 && config.min_duration <= config.max_duration)
    {
        return Err(Error::Parameter("synthetic duration and cue gap ranges are invalid".into()));
    }
    for rate in [config.bug_word_rate, config.false_bug_word_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Parameter(format!("word rate {rate} is not a probability")));
        }
    }
    let transcripts = out.join("transcripts");
    std::fs::create_dir_all(&transcripts).map_err(|e| Error::io(&transcripts, e))?;
    let mut rng = seeds::stage_rng(config.seed, seeds::STAGE_SYNTH);

    let mut metas = Vec::with_capacity(config.videos);
    let mut labels = LabelTable::new();
    for v in 0..config.videos {
        let genre = if v % 2 == 0 { Genre::Action } else { Genre::Sports };
        let games = if genre == Genre::Action { ACTION_GAMES } else { SPORTS_GAMES };
        let duration = rng.random_range(config.min_duration..=config.max_duration).round();
        let meta = VideoMeta {
            video_id: format!("vid_{:03}", v + 1),
            duration,
            genre,
            game_title: games[(v / 2) % games.len()].to_string(),
        };

        let mut starts = vec![0.0];
        loop {
            let next = (starts.last().unwrap() + rng.random_range(config.min_cue_gap..=config.max_cue_gap)).round();
            if next >= duration {
                break;
            }
            starts.push(next);
        }
        let cues: Vec<TranscriptCue> = starts
            .iter()
            .enumerate()
            .map(|(i, &start)| TranscriptCue {
                start,
                end: starts.get(i + 1).copied().unwrap_or(duration),
                text: String::new(),
            })
            .collect();
        let segments = segment_video(&cues, &meta)?;

        let (p_start, p_stay) = transitions(genre);
        let mut buggy = false;
        let flags: Vec<bool> = segments
            .iter()
            .map(|_| {
                buggy = rng.random_bool(if buggy { p_stay } else { p_start });
                buggy
            })
            .collect();
        for (s, &b) in segments.iter().zip(&flags) {
            labels.insert(s.key(), if b { Label::Buggy } else { Label::Clean });
        }

        let mut tsv = String::from("start\ttext\n");
        for cue in &cues {
            let seg = segments
                .iter()
                .rposition(|s| s.start <= cue.start)
                .expect("segments tile the video from zero");
            let _ = writeln!(tsv, "{}\t{}", cue.start, cue_text(&mut rng, flags[seg], config));
        }
        let path = transcripts.join(format!("{}.tsv", meta.video_id));
        std::fs::write(&path, tsv).map_err(|e| Error::io(&path, e))?;
        metas.push(meta);
    }

    write_meta(&out.join("meta.csv"), &metas)?;
    write_labels(&out.join("labels.csv"), &labels)?;

    // Re-read the written transcripts so segment text matches what the
    // pipeline will see.
    let segments = attach_labels(segment_corpus(&transcripts, &metas)?, &labels)?;
    let embed_seed = seeds::derive_seed(config.seed, "synth/embed");
    let dataset = synthetic_embed(segments, embed_seed, config.separation)?;
    dataset.write(&out.join("frames.jsonl"), &out.join("texts.jsonl"))?;

    let mut designations = Designations::new();
    for s in dataset.segments() {
        let frames = dataset.frame_count(&s.key());
        if s.label == Some(Label::Buggy) && frames > 0 {
            designations.insert(s.key(), rng.random_range(0..frames));
        }
    }
    write_designations(&out.join("designations.csv"), &designations)?;

    let mut run = RunConfig {
        seed: config.seed,
        output_dir: PathBuf::from("run"),
        ..RunConfig::default()
    };
    run.data.transcripts = PathBuf::from("transcripts");
    run.data.meta = PathBuf::from("meta.csv");
    run.data.labels = PathBuf::from("labels.csv");
    run.data.frames = PathBuf::from("frames.jsonl");
    run.data.texts = PathBuf::from("texts.jsonl");
    run.data.designations = Some(PathBuf::from("designations.csv"));
    run.subsets.genres = vec!["action".into(), "sports".into()];
    run.subsets.games = vec![SPORTS_GAMES[0].into()];
    let config_path = out.join("run.toml");
    std::fs::write(&config_path, run.to_toml()?).map_err(|e| Error::io(&config_path, e))?;

    let summary = SynthSummary {
        videos: metas.len(),
        segments: dataset.segments().len(),
        buggy_segments: labels.values().filter(|l| l.is_buggy()).count(),
        frames: dataset.frames().len(),
        config_path,
    };
    info!(
        "synthetic corpus: {} videos, {} segments ({} buggy), {} frames",
        summary.videos, summary.segments, summary.buggy_segments, summary.frames
    );
    Ok(summary)
}
