use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmo_core::metrics::Preset;
use mmo_core::solver::Optimizer;

/// Metric optimization for multi-label classification.
///
/// Exit codes: 0 ok, 1 verification failed, 2 configuration error, 3 data
/// error, 4 training diverged, 5 degenerate metric.
///
/// `MMO_THREADS` caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "mmo", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Print the JSON report on stdout instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,

    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a linear model on an `.mlsvm` file.
    Train(TrainArgs),
    /// Search for the metric multiplier lambda.
    LambdaSearch(SearchArgs),
    /// Evaluate a saved model.
    Eval(EvalArgs),
    /// Run numerical verification checks.
    Verify(VerifyArgs),
    /// Time the surrogate and a training epoch.
    Bench(BenchArgs),
    /// Write a synthetic linear dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStrategy {
    /// Track lambda with an exponential moving average of the batch metric.
    Ema,
    /// Train with a fixed `--lambda`.
    FixedLambda,
    /// Plain per-label logistic loss, ignoring the metric.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    Oracle,
    SurrogateBs,
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingArg {
    Micro,
    Macro,
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalAveraging {
    Micro,
    Macro,
    Instance,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Factorization,
    Gradient,
    Equiv,
    Sign,
    Bound,
    Runtime,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimArgs {
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// `gd` or `adam`.
    #[arg(long, default_value = "adam")]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricArgs {
    /// f1, jaccard, precision or accuracy.
    #[arg(long, default_value = "f1")]
    pub metric: Preset,
    #[arg(long, value_enum, default_value_t = AveragingArg::Micro)]
    pub averaging: AveragingArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long, value_enum, default_value_t = TrainStrategy::Ema)]
    pub strategy: TrainStrategy,
    /// Multiplier for `fixed-lambda`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.7)]
    pub ema_gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda0: f64,
    /// Where to write the trained model.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long, value_enum)]
    pub strategy: SearchStrategy,
    /// Training data (surrogate-bs, cv).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation data (cv).
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Finite distribution in `.dist` format (oracle).
    #[arg(long)]
    pub dist: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricArgs,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_max: f64,
    /// Lambda resolution; each strategy has its own default.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Acceptance band on the linearized loss (surrogate-bs).
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon_m: f64,
    /// Where to write the selected model (surrogate-bs, cv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "f1")]
    pub metric: Preset,
    #[arg(long, value_enum, default_value_t = EvalAveraging::Micro)]
    pub averaging: EvalAveraging,
    /// Drop degenerate terms instead of failing with exit code 5.
    #[arg(long)]
    pub skip_degenerate: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Check::All)]
    pub check: Check,
    /// Label counts, comma separated. The largest is used as the maximum for
    /// factorization and gradient checks.
    #[arg(long = "l", value_delimiter = ',')]
    pub labels: Vec<usize>,
    /// Temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Label counts for the loss timing, comma separated.
    #[arg(long = "l", value_delimiter = ',', default_value = "4,8,12,64,256,1024,4096")]
    pub labels: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Instances in the synthetic training set used for epoch timing.
    #[arg(long, default_value_t = 20_000)]
    pub m: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long = "l", default_value_t = 10)]
    pub labels: usize,
    #[arg(long = "d", default_value_t = 50)]
    pub dim: usize,
    #[arg(long = "m", default_value_t = 20_000)]
    pub size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub positive_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the planted model.
    #[arg(long)]
    pub plant: Option<PathBuf>,
}
