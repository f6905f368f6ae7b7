//! `tsxb`: generate data, train, explain, evaluate and select channels.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsxb_core::attrib::{ChunkSpec, Method};
use tsxb_core::eval::FilterMode;
use tsxb_core::{MaskKind, ScoreTarget};

use config::{ModelKind, StatsSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// A configuration problem detected by the command-line layer itself.
#[derive(Debug)]
pub enum CliError {
    Config(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "tsxb", version, about = "Saliency maps for multivariate time series classifiers, and how to judge them")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed; falls back to the config file, then TSXB_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark (train/ and test/ with ground truth).
    GenSynth(GenSynthArgs),
    /// Train a classifier and report its accuracy.
    Train(TrainArgs),
    /// Compute saliency maps for every method and chunking.
    Explain(ExplainArgs),
    /// Score saliency maps with perturbation curves under several masks.
    Evaluate(EvaluateArgs),
    /// Score saliency maps against the ground-truth mask.
    GtEval(GtEvalArgs),
    /// Rank channels by attribution mass and retrain on the top ones.
    Channels(ChannelsArgs),
    /// Re-render scores, curves and plots from a saved report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub n_channels: Option<usize>,
    #[arg(long)]
    pub square_wave_prob: Option<f64>,
    #[arg(long)]
    pub extra_nondisc_channels: Option<usize>,
    #[arg(long)]
    pub label_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset directory (or a gen-synth root holding train/).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test dataset directory; defaults to the sibling test/ of a gen-synth root.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<ModelKind>,
    /// Random kernels for the kernel model.
    #[arg(long)]
    pub kernels: Option<usize>,
    /// Ridge penalty (default 1000 for random_kernel, 1 for tabular).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum TargetArg {
    Predicted,
    TrueLabel,
}

impl From<TargetArg> for ScoreTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Predicted => ScoreTarget::Predicted,
            TargetArg::TrueLabel => ScoreTarget::TrueLabel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FilterArg {
    BestMethod,
    PerMethod,
}

impl From<FilterArg> for FilterMode {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::BestMethod => FilterMode::BestMethod,
            FilterArg::PerMethod => FilterMode::PerMethod,
        }
    }
}

/// Options shared by every command that runs explainers.
#[derive(Debug, Args)]
pub struct ExplainerArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset to explain (or a gen-synth root holding test/).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training set, for `--stats-from train` and retraining.
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stats_from: Option<StatsSource>,
    /// Comma-separated explainers: feature_ablation, feature_permutation,
    /// shap_sampling, kernel_shap, random.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Replacement used inside the explainers.
    #[arg(long)]
    pub baseline: Option<MaskKind>,
    #[arg(long)]
    pub n_permutations: Option<usize>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: ExplainerArgs,
    /// Comma-separated chunkings: point, 5, 10, 10x (cross-channel), ...
    #[arg(long, value_delimiter = ',')]
    pub chunks: Option<Vec<ChunkSpec>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: ExplainerArgs,
    #[arg(long, value_delimiter = ',')]
    pub chunks: Option<Vec<ChunkSpec>>,
    /// Comma-separated replacement masks used for the perturbation curves.
    #[arg(long, value_delimiter = ',')]
    pub masks: Option<Vec<MaskKind>>,
    /// Relative margin over the random baseline for keeping a mask.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, value_enum)]
    pub filter_mode: Option<FilterArg>,
    /// Comma-separated quantiles k of the positive attributions.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<f64>>,
    #[arg(long)]
    pub normalize_by_max: bool,
    #[arg(long)]
    pub clip_sbar: bool,
    /// Reuse the saliency maps written by `explain` instead of recomputing.
    #[arg(long)]
    pub saliency: Option<PathBuf>,
    /// Fill the runtime_s column (makes scores.csv run-dependent).
    #[arg(long)]
    pub timings: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GtEvalArgs {
    /// Dataset with a ground-truth mask (or a gen-synth root holding test/).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// A saliency directory, or an `explain` output holding several.
    #[arg(long)]
    pub saliency: Option<PathBuf>,
    /// Also score the random baseline.
    #[arg(long)]
    pub random: bool,
    #[arg(long)]
    pub limit: Option<usize>,
    /// CSV file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChannelsArgs {
    #[command(flatten)]
    pub common: ExplainerArgs,
    /// Chunking used by the explainers.
    #[arg(long)]
    pub chunks: Option<ChunkSpec>,
    /// Reuse saliency maps written by `explain`.
    #[arg(long)]
    pub saliency: Option<PathBuf>,
    /// Average the raw attributions instead of the normalized ones.
    #[arg(long)]
    pub raw: bool,
    /// Number of top channels to keep; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    pub select: Vec<usize>,
    /// Retrain the model's kind on each selection and report accuracy.
    #[arg(long)]
    pub retrain: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.json.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Where to write; defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub timings: bool,
}

/// Exit code for an error: 2 when any cause is a configuration error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let config = err.chain().any(|cause| {
        cause.downcast_ref::<CliError>().is_some()
            || cause.downcast_ref::<tsxb_core::Error>().is_some_and(|e| e.is_config())
    });
    if config {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
