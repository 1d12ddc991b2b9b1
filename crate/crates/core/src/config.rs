//! Declarative run configuration and the run manifest.
//!
//! A run is described by one TOML file with sections; command-line flags
//! override file values, which override the defaults below. Relative paths
//! in the file are resolved against the file's directory.
//!
//! ```toml
//! seed = 42
//! output_dir = "run"
//!
//! [data]
//! transcripts = "transcripts"
//! meta = "meta.csv"
//! labels = "labels.csv"
//! frames = "frames.jsonl"
//! texts = "texts.jsonl"
//!
//! [codebook]
//! mode = "automatic"
//! k = 64
//! idf = "smooth"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::TTestKind;
use crate::classify::protocol::{ClassifierGrid, ProtocolConfig, SubsetFilter};
use crate::classify::SplitFractions;
use crate::codebook::{CodebookMode, IdfForm};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Directory of `{video_id}.srt|.vtt|.tsv` transcripts.
    pub transcripts: PathBuf,
    pub meta: PathBuf,
    pub labels: PathBuf,
    pub frames: PathBuf,
    pub texts: PathBuf,
    /// Required by the manual codebook only.
    pub designations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub mode: CodebookMode,
    /// Cluster count of the automatic codebook.
    pub k: usize,
    pub idf: IdfForm,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            mode: CodebookMode::Automatic,
            k: 64,
            idf: IdfForm::Smooth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub standardize: bool,
    pub grid: ClassifierGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub alpha: f64,
    pub t_test: TTestKind,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            t_test: TTestKind::Welch,
        }
    }
}

/// Extra protocol runs restricted to one genre or one game each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    pub genres: Vec<String>,
    pub games: Vec<String>,
}

impl SubsetConfig {
    pub fn filters(&self) -> Result<Vec<SubsetFilter>> {
        let mut out = Vec::new();
        for g in &self.genres {
            out.push(SubsetFilter::Genre(g.parse()?));
        }
        for t in &self.games {
            out.push(SubsetFilter::Game(t.clone()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stage derives its own from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub codebook: CodebookConfig,
    pub split: SplitFractions,
    pub classifiers: ClassifierConfig,
    pub stats: StatsConfig,
    pub subsets: SubsetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("run"),
            data: DataPaths::default(),
            codebook: CodebookConfig::default(),
            split: SplitFractions::default(),
            classifiers: ClassifierConfig::default(),
            stats: StatsConfig::default(),
            subsets: SubsetConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&raw)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [&mut d.transcripts, &mut d.meta, &mut d.labels, &mut d.frames, &mut d.texts] {
            resolve(base, p);
        }
        if let Some(p) = d.designations.as_mut() {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks parameters and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        for (name, p) in [
            ("data.transcripts", &d.transcripts),
            ("data.meta", &d.meta),
            ("data.labels", &d.labels),
            ("data.frames", &d.frames),
            ("data.texts", &d.texts),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{name} is not set")));
            }
            if !p.exists() {
                return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
            }
        }
        match (self.codebook.mode, &d.designations) {
            (CodebookMode::Manual, None) => {
                return Err(Error::Config("manual codebook needs data.designations".into()))
            }
            (_, Some(p)) if !p.exists() => {
                return Err(Error::Config(format!(
                    "data.designations: {} does not exist",
                    p.display()
                )))
            }
            _ => {}
        }
        if self.codebook.k < 2 {
            return Err(Error::Config(format!("codebook.k must be at least 2, got {}", self.codebook.k)));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(Error::Config(format!("stats.alpha must lie in (0, 1), got {}", self.stats.alpha)));
        }
        self.split.validate()?;
        self.subsets.filters()?;
        Ok(())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            seed: self.seed,
            fractions: self.split,
            standardize: self.classifiers.standardize,
            grid: self.classifiers.grid.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// a replay may write elsewhere.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        sha256_hex(json.as_bytes())
    }

    /// Every derived stage seed, keyed by stage name.
    pub fn stage_seeds(&self) -> BTreeMap<String, u64> {
        [
            seeds::STAGE_CODEBOOK,
            seeds::STAGE_SPLIT,
            seeds::STAGE_LINEAR,
            seeds::STAGE_KNN,
            seeds::STAGE_RANDOM_FOREST,
            seeds::STAGE_EXTRA_TREES,
        ]
        .into_iter()
        .map(|s| (s.to_string(), seeds::derive_seed(self.seed, s)))
        .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: &Path) -> Result<Self> {
        Ok(Self {
            path: shown_as.to_path_buf(),
            sha256: file_sha256(path)?,
        })
    }
}

/// Everything needed to replay a run and check that it reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub root_seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory.
    pub artifacts: Vec<FileDigest>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Fails when the recorded config or an input no longer matches.
    pub fn check_replayable(&self) -> Result<()> {
        let actual = self.config.hash();
        if actual != self.config_sha256 {
            return Err(Error::Integrity(format!(
                "manifest config hash {} does not match its config ({actual})",
                self.config_sha256
            )));
        }
        for input in &self.inputs {
            if input.path.is_dir() {
                continue;
            }
            let now = file_sha256(&input.path)?;
            if now != input.sha256 {
                return Err(Error::Integrity(format!(
                    "input {} changed since the recorded run",
                    input.path.display()
                )));
            }
        }
        Ok(())
    }
}
