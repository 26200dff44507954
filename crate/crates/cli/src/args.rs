//! Flag definitions. Every option is optional at the flag level so that a
//! config file can supply it; defaults are applied after merging.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use warpgp::{ModelFamily, PointEstimate, RocConvention, WarpScenario};

#[derive(Debug, Parser)]
#[command(name = "warpgp", version, about = "Warped GP regression, evaluation and causal scoring")]
pub struct Cli {
    /// Config file, `key = value` lines or a JSON object. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it with a fit report.
    Fit(FitArgs),
    /// Repeated-split or k-fold evaluation.
    Eval(EvalArgs),
    /// Predictive summaries for new rows.
    Predict(PredictArgs),
    /// Score a directory of cause-effect pairs.
    Causal(CausalArgs),
    /// Generate synthetic data.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Warped GP regression data as CSV.
    Warped(SynthWarpedArgs),
    /// Additive-noise cause-effect pairs in pair-directory layout.
    Pairs(SynthPairsArgs),
}

/// Optimizer and warp options shared by the fitting subcommands.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelOpts {
    /// Number of tanh steps in the warp.
    #[arg(long = "warp-L", visible_alias = "warp-l")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warp_l: Option<usize>,
    /// Keep the linear term of the warp (true/false).
    #[arg(long, action = ArgAction::Set)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Relative improvement below which an optimizer run stops.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// Training data selection shared by `fit` and `eval`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DataOpts {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Comma-separated feature columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    /// Comma-separated target transforms applied in order, e.g. `log`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataOpts,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFamily>,
    /// Fraction of rows used for training; the rest is scored as held out.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: ModelOpts,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataOpts,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFamily>,
    /// `rates` or `kfold`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Point prediction scored by the metrics: `median` or `mean`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<PointEstimate>,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: ModelOpts,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    /// CSV holding the model's feature columns.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_quantile: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_quantile: Option<f64>,
    /// Rows with std / |mean| below this pass the mask.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CausalArgs {
    /// Pair directory with `pairmeta.txt`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    /// Comma-separated regressors; each gets its own output files.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regressor: Option<Vec<ModelFamily>>,
    /// Pairs longer than this are subsampled.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    /// `signed` or `correctness`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocConvention>,
    #[command(flatten)]
    #[serde(flatten)]
    pub opts: ModelOpts,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthWarpedArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `identity`, `exponential` or `tanh-steps`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<WarpScenario>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SynthPairsArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}
