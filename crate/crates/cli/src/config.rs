//! Pipeline configuration: a flat TOML file with one section per stage.
//! Every field has a default; command-line flags override file values.

use entroscan::dataset;
use entroscan::entropy::{SampleSpec, SampleStrategy, DEFAULT_BIN_COUNT};
use entroscan::preprocess::Normalization;
use entroscan::volume::Axis;
use serde::Deserialize;
use std::path::PathBuf;

use crate::CliError;

/// Environment variable that overrides `[paths] work_dir`.
pub const WORK_DIR_ENV: &str = "ENTROSCAN_WORK_DIR";

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub ingest: Option<IngestSection>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Existing manifest to classify; empty means synthesize one.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_per_class")]
    pub per_class: [usize; 3],
    #[serde(default = "default_extents")]
    pub extents: [usize; 3],
}

fn default_per_class() -> [usize; 3] {
    dataset::DEFAULT_PER_CLASS
}

fn default_extents() -> [usize; 3] {
    let (nx, ny, nz) = dataset::DEFAULT_EXTENTS;
    [nx, ny, nz]
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: default_per_class(),
            extents: default_extents(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default)]
    pub trim_head: usize,
    #[serde(default)]
    pub trim_tail: usize,
    #[serde(default = "default_bins")]
    pub bin_count: usize,
    #[serde(default = "default_axis")]
    pub axis: String,
}

fn default_strategy() -> String {
    "top50".to_string()
}

fn default_bins() -> usize {
    DEFAULT_BIN_COUNT
}

fn default_axis() -> String {
    "z".to_string()
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            trim_head: 0,
            trim_tail: 0,
            bin_count: default_bins(),
            axis: default_axis(),
        }
    }
}

impl SamplingConfig {
    pub fn spec(&self) -> Result<SampleSpec, CliError> {
        let strategy: SampleStrategy = self
            .strategy
            .parse()
            .map_err(CliError::Config)?;
        if self.bin_count < 2 {
            return Err(CliError::Config(format!(
                "bin_count {} must be at least 2",
                self.bin_count
            )));
        }
        Ok(SampleSpec {
            strategy,
            trim_head: self.trim_head,
            trim_tail: self.trim_tail,
            bin_count: self.bin_count,
        })
    }

    pub fn axis(&self) -> Result<Axis, CliError> {
        self.axis.parse().map_err(CliError::Config)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    #[serde(default = "default_target")]
    pub target: [usize; 2],
    #[serde(default = "default_normalization")]
    pub normalization: String,
}

fn default_target() -> [usize; 2] {
    [16, 16]
}

fn default_normalization() -> String {
    "minmax".to_string()
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            target: default_target(),
            normalization: default_normalization(),
        }
    }
}

impl PreprocessSection {
    pub fn config(&self) -> Result<entroscan::preprocess::PreprocessConfig, CliError> {
        let normalization: Normalization =
            self.normalization.parse().map_err(CliError::Config)?;
        if self.target[0] < 1 || self.target[1] < 1 {
            return Err(CliError::Config(format!(
                "preprocess target {:?} must be at least 1x1",
                self.target
            )));
        }
        Ok(entroscan::preprocess::PreprocessConfig {
            target: (self.target[0], self.target[1]),
            normalization,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Defaults to 16, or 2 automatically under the max1 strategy.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn default_epochs() -> usize {
    50
}

fn default_learning_rate() -> f64 {
    0.001
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: None,
        }
    }
}

impl TrainingSection {
    pub fn batch_size_for(&self, strategy: SampleStrategy) -> usize {
        self.batch_size.unwrap_or(match strategy {
            SampleStrategy::MaxOne => entroscan::learner::MAX_ONE_BATCH_SIZE,
            _ => 16,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.75
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: default_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    Vote,
    Stack,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_ensemble_mode")]
    pub mode: EnsembleMode,
}

fn default_ensemble_mode() -> EnsembleMode {
    EnsembleMode::Both
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            mode: default_ensemble_mode(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Slice,
    Scan,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Slice => "slice",
            Self::Scan => "scan",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "slice" => Ok(Self::Slice),
            "scan" => Ok(Self::Scan),
            other => Err(format!(
                "unknown granularity '{other}' (expected slice or scan)"
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_granularity")]
    pub granularity: Granularity,
}

fn default_granularity() -> Granularity {
    Granularity::Slice
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            granularity: default_granularity(),
        }
    }
}

/// External prediction CSVs standing in for the trained base models.
/// When present, synthesis, sampling, preprocessing, and base training
/// are skipped; `[paths] manifest` must point at the labelled scans.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub model_ids: Vec<String>,
}

impl PipelineConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{path:?}: {e}")))
    }
}
