//! Run configuration: defaults, overlaid by a TOML file, overlaid by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use srfe_core::features::{FeatureConfig, FeatureKind};
use srfe_core::nn::TrainConfig;

/// One feature kind, or all six.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureSelection {
    One(FeatureKind),
    All,
}

impl FeatureSelection {
    pub fn kinds(self) -> Vec<FeatureKind> {
        match self {
            FeatureSelection::One(k) => vec![k],
            FeatureSelection::All => FeatureKind::ALL.to_vec(),
        }
    }
}

impl FromStr for FeatureSelection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(FeatureSelection::All);
        }
        s.parse::<FeatureKind>().map(FeatureSelection::One).map_err(|e| e.to_string())
    }
}

impl TryFrom<String> for FeatureSelection {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<FeatureSelection> for String {
    fn from(sel: FeatureSelection) -> String {
        sel.to_string()
    }
}

impl fmt::Display for FeatureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSelection::One(k) => write!(f, "{}", k.name()),
            FeatureSelection::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub feature: FeatureSelection,
    pub audio_dir: PathBuf,
    pub manifest: PathBuf,
    pub feature_dir: PathBuf,
    pub split_file: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    pub seed: u64,
    pub train_fraction: f64,
    pub n_classes: usize,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    /// Extraction threads; 0 means one per logical core.
    pub workers: usize,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            feature: FeatureSelection::One(FeatureKind::Mel),
            audio_dir: "audio".into(),
            manifest: "meta/esc50.csv".into(),
            feature_dir: "features".into(),
            split_file: "split.json".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
            seed: 0,
            train_fraction: 0.8,
            n_classes: 50,
            sample_rate: srfe_core::WORKING_SAMPLE_RATE,
            clip_seconds: 5.0,
            workers: 0,
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1)");
        }
        if self.n_classes < 2 {
            bail!("n_classes must be at least 2");
        }
        if !(self.clip_seconds > 0.0) {
            bail!("clip_seconds must be positive");
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn kind_dir(&self, kind: FeatureKind) -> PathBuf {
        self.feature_dir.join(kind.name())
    }

    pub fn checkpoint_path(&self, kind: FeatureKind) -> PathBuf {
        self.checkpoint_dir.join(format!("{}.srnn", kind.name()))
    }

    pub fn history_path(&self, kind: FeatureKind) -> PathBuf {
        self.checkpoint_dir.join(format!("{}_history.csv", kind.name()))
    }

    pub fn report_path(&self, kind: FeatureKind) -> PathBuf {
        self.report_dir.join(format!("{}_report.json", kind.name()))
    }
}

/// Feature file name for an audio file name: `1-100032-A-0.wav` → `1-100032-A-0.srf`.
pub fn feature_file_name(audio_name: &str) -> String {
    let stem = Path::new(audio_name).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{stem}.srf")
}

/// Which path a subcommand's `--out` flag replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSlot {
    FeatureDir,
    SplitFile,
    CheckpointDir,
    ReportDir,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub feature: Option<FeatureSelection>,
    pub audio_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: Option<(OutputSlot, PathBuf)>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.feature {
            cfg.feature = v;
        }
        if let Some(v) = &self.audio_dir {
            cfg.audio_dir = v.clone();
        }
        if let Some(v) = &self.manifest {
            cfg.manifest = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some((slot, path)) = &self.out {
            let target = match slot {
                OutputSlot::FeatureDir => &mut cfg.feature_dir,
                OutputSlot::SplitFile => &mut cfg.split_file,
                OutputSlot::CheckpointDir => &mut cfg.checkpoint_dir,
                OutputSlot::ReportDir => &mut cfg.report_dir,
            };
            *target = path.clone();
        }
    }
}

/// Defaults, then the optional config file, then `overrides`.
pub fn effective_config(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
