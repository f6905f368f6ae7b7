//! JSON run configuration. Every field is optional; command-line flags
//! override whatever the file sets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsxb_core::eval::SuiteConfig;
use tsxb_core::synth::SynthConfig;

use crate::CliError;

pub const SEED_ENV: &str = "TSXB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    RandomKernel,
    Tabular,
}

impl ModelKind {
    pub fn default_lambda(self) -> f64 {
        match self {
            ModelKind::RandomKernel => 1000.0,
            ModelKind::Tabular => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ModelKind,
    pub kernels: usize,
    pub lambda: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::RandomKernel,
            kernels: 2000,
            lambda: None,
        }
    }
}

/// Where replacement-mask statistics are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum StatsSource {
    /// The dataset being explained.
    #[default]
    Data,
    /// The training set given by `--train-data`.
    Train,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Only the first `limit` instances are explained and evaluated.
    pub limit: Option<usize>,
    pub stats_from: StatsSource,
    pub classifier: ClassifierConfig,
    pub synth: SynthConfig,
    pub suite: SuiteConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flag, then config file, then `TSXB_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = flag.or(cfg.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
