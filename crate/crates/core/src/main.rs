use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use bugscope::analytics::attributes::{read_attributes, write_attributes};
use bugscope::analytics::user_study::{participant_attributes, read_windows, user_study_summary};
use bugscope::analytics::{genre_comparison, TTestKind};
use bugscope::classify::protocol::{train_all, ProtocolConfig};
use bugscope::classify::split;
use bugscope::codebook::{read_designations, Codebook, CodebookMode, IdfForm};
use bugscope::config::RunConfig;
use bugscope::embedding::load_embeddings;
use bugscope::pipeline::{self, load_segments};
use bugscope::segmentation::{read_meta, read_segments, write_segments};
use bugscope::synth::{generate, SynthConfig};
use bugscope::text::{read_features, write_features};
use bugscope::{seeds, Error, Result};

#[derive(Parser)]
#[command(name = "bugscope", version, about = "Gameplay video bug detection from captions and frame embeddings")]
struct Cli {
    /// Worker threads for per-video and per-tree parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut transcripts into segments of at least five seconds.
    Segment(SegmentArgs),
    /// Check embedding files against the segments; nonzero exit on any integrity error.
    Validate(ValidateArgs),
    /// Build the visual codebook.
    Codebook(CodebookArgs),
    /// Compute TF-IDF plus text feature rows.
    Featurize(FeaturizeArgs),
    /// Split, tune and train every classifier family and the ensemble.
    Train(TrainArgs),
    /// Score trained models on their held-out test part.
    Evaluate(EvaluateArgs),
    /// Per-video bug distribution attributes.
    Attributes(AttributesArgs),
    /// Action vs Sports comparison of the attributes.
    Stats(StatsArgs),
    /// Compare participant-reported bug windows with the labels.
    UserStudy(UserStudyArgs),
    /// Generate a synthetic corpus with a demo run config.
    Synth(SynthArgs),
    /// Full pipeline from a run config.
    Run(RunArgs),
}

#[derive(Args)]
struct SegmentArgs {
    /// Directory of `{video_id}.srt|.vtt|.tsv` transcripts.
    #[arg(long)]
    transcripts: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Optional `video_id,segment_index,label` file to attach.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "segments.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EmbeddingInputs {
    /// Segment CSV written by `segment`.
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    texts: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: EmbeddingInputs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Automatic,
    Manual,
}

#[derive(Clone, Copy, ValueEnum)]
enum IdfArg {
    Raw,
    Smooth,
}

#[derive(Clone, Copy, ValueEnum)]
enum TTestArg {
    Welch,
    Student,
}

impl From<TTestArg> for TTestKind {
    fn from(t: TTestArg) -> Self {
        match t {
            TTestArg::Welch => TTestKind::Welch,
            TTestArg::Student => TTestKind::Student,
        }
    }
}

#[derive(Args)]
struct CodebookArgs {
    #[command(flatten)]
    inputs: EmbeddingInputs,
    #[arg(long, value_enum, default_value = "automatic")]
    mode: ModeArg,
    /// Cluster count of the automatic codebook.
    #[arg(long, default_value_t = 64)]
    k: usize,
    /// Designated bug frames, required by the manual mode.
    #[arg(long)]
    designations: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "codebook.json")]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    inputs: EmbeddingInputs,
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long, value_enum, default_value = "smooth")]
    idf: IdfArg,
    #[arg(long, default_value = "features.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// Run config whose `seed`, `[split]` and `[classifiers]` apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Z-score features on the train part.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value = "models")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    /// Directory written by `train`.
    #[arg(long, default_value = "models")]
    models: PathBuf,
    #[arg(long, default_value = "full")]
    dataset: String,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AttributesArgs {
    /// Labeled segment CSV.
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value = "attributes.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    attributes: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "welch")]
    t_test: TTestArg,
    #[arg(long, default_value = "stats.csv")]
    out_csv: PathBuf,
    #[arg(long, default_value = "stats.json")]
    out_json: PathBuf,
}

#[derive(Args)]
struct UserStudyArgs {
    /// `participant_id,video_id,start_seconds,end_seconds` file.
    #[arg(long)]
    windows: PathBuf,
    /// Labeled segment CSV.
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Videos to summarize (default: every video with participant input).
    #[arg(long, value_delimiter = ',')]
    videos: Vec<String>,
    #[arg(long, default_value = "user_study.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    videos: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Shift of buggy frames along the bug direction.
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config.
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Re-run the config recorded in a manifest and check the artifacts match.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `codebook.mode`.
    #[arg(long, value_enum)]
    codebook_mode: Option<ModeArg>,
    /// Overrides `codebook.k`.
    #[arg(long)]
    k: Option<usize>,
    /// Overrides `codebook.idf`.
    #[arg(long, value_enum)]
    idf: Option<IdfArg>,
    /// Sets `classifiers.standardize`.
    #[arg(long)]
    standardize: bool,
    /// Overrides `stats.t_test`.
    #[arg(long, value_enum)]
    t_test: Option<TTestArg>,
}

impl From<ModeArg> for CodebookMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Automatic => CodebookMode::Automatic,
            ModeArg::Manual => CodebookMode::Manual,
        }
    }
}

impl From<IdfArg> for IdfForm {
    fn from(i: IdfArg) -> Self {
        match i {
            IdfArg::Raw => IdfForm::Raw,
            IdfArg::Smooth => IdfForm::Smooth,
        }
    }
}

fn load_dataset(inputs: &EmbeddingInputs) -> Result<bugscope::embedding::EmbeddingDataset> {
    let segments = read_segments(&inputs.segments)?;
    let dataset = load_embeddings(&inputs.frames, &inputs.texts, segments)?;
    pipeline::log_warnings(dataset.warnings());
    Ok(dataset)
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Segment(a) => {
            let (_, segments) = load_segments(&a.transcripts, &a.meta, a.labels.as_deref())?;
            parent_dir(&a.out)?;
            write_segments(&a.out, &segments)?;
        }
        Command::Validate(a) => {
            let d = load_dataset(&a.inputs)?;
            info!(
                "valid: {} segments, {} frame records, {} text records, {} warnings",
                d.segments().len(),
                d.frames().len(),
                d.texts().len(),
                d.warnings().len()
            );
        }
        Command::Codebook(a) => {
            let d = load_dataset(&a.inputs)?;
            let designations = a.designations.as_deref().map(read_designations).transpose()?;
            let codebook = pipeline::build_codebook(&d, a.mode.into(), a.k, a.seed, designations.as_ref())?;
            parent_dir(&a.out)?;
            codebook.save(&a.out)?;
        }
        Command::Featurize(a) => {
            let d = load_dataset(&a.inputs)?;
            let codebook = Codebook::load(&a.codebook)?;
            let features = pipeline::featurize(&d, &codebook, a.idf.into());
            parent_dir(&a.out)?;
            write_features(&a.out, codebook.k(), &features)?;
        }
        Command::Train(a) => {
            let (_, features) = read_features(&a.features)?;
            let mut protocol = match &a.config {
                Some(p) => RunConfig::load(p)?.protocol(),
                None => ProtocolConfig::default(),
            };
            if let Some(seed) = a.seed {
                protocol.seed = seed;
            }
            protocol.standardize |= a.standardize;
            let data = split(
                &features,
                seeds::derive_seed(protocol.seed, seeds::STAGE_SPLIT),
                protocol.fractions,
            )?;
            let set = train_all(&data, &protocol)?;
            for (m, f1) in set.models.iter().zip(&set.validation_f1) {
                info!("{}: validation F1 {f1:.4}", m.kind().display_name());
            }
            pipeline::save_trained(&a.out_dir, &set, &data)?;
        }
        Command::Evaluate(a) => {
            let (_, features) = read_features(&a.features)?;
            let report = pipeline::evaluate_saved(&a.models, &features, &a.dataset)?;
            parent_dir(&a.out)?;
            report.write_csv(&a.out)?;
            eprint!("{}", report.to_table());
        }
        Command::Attributes(a) => {
            let metas = read_meta(&a.meta)?;
            let segments = read_segments(&a.segments)?;
            let attrs = pipeline::corpus_attributes(&segments, &metas)?;
            parent_dir(&a.out)?;
            write_attributes(&a.out, &attrs)?;
        }
        Command::Stats(a) => {
            let metas = read_meta(&a.meta)?;
            let attrs = read_attributes(&a.attributes)?;
            let comparison = genre_comparison(&attrs, &metas, a.alpha, a.t_test.into())?;
            parent_dir(&a.out_csv)?;
            parent_dir(&a.out_json)?;
            pipeline::write_comparison(&a.out_csv, &a.out_json, &comparison)?;
        }
        Command::UserStudy(a) => {
            let metas = read_meta(&a.meta)?;
            let segments = read_segments(&a.segments)?;
            let windows = read_windows(&a.windows)?;
            let participants = participant_attributes(&windows, &segments, &metas)?;
            let pipeline_attrs = pipeline::corpus_attributes(&segments, &metas)?;
            let videos = if a.videos.is_empty() {
                let mut v: Vec<String> = windows.iter().map(|w| w.video_id.clone()).collect();
                v.sort();
                v.dedup();
                v
            } else {
                a.videos
            };
            let summary = user_study_summary(&participants, &pipeline_attrs, &videos)?;
            parent_dir(&a.out)?;
            summary.write_csv(&a.out)?;
        }
        Command::Synth(a) => {
            let config = SynthConfig {
                videos: a.videos,
                seed: a.seed,
                separation: a.separation,
                ..SynthConfig::default()
            };
            let summary = generate(&a.out, &config)?;
            info!("demo config: {}", summary.config_path.display());
        }
        Command::Run(a) => {
            let outcome = if let Some(manifest) = &a.replay {
                pipeline::replay(manifest, a.out.as_deref())?
            } else {
                let path = a.config.as_ref().expect("clap requires --config");
                let mut config = RunConfig::load(path)?;
                if let Some(out) = a.out {
                    config.output_dir = out;
                }
                if let Some(seed) = a.seed {
                    config.seed = seed;
                }
                if let Some(m) = a.codebook_mode {
                    config.codebook.mode = m.into();
                }
                if let Some(k) = a.k {
                    config.codebook.k = k;
                }
                if let Some(idf) = a.idf {
                    config.codebook.idf = idf.into();
                }
                if a.standardize {
                    config.classifiers.standardize = true;
                }
                if let Some(t) = a.t_test {
                    config.stats.t_test = t.into();
                }
                pipeline::run(&config)?
            };
            eprint!("{}", outcome.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else {
        match cli.verbose {
            0 => "info",
            1 => "debug",
            _ => "trace",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            error!("--jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
