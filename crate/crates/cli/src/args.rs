//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lattice", version, about = "Fit, simulate, certify and backtest lattice-market trading policies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Master seed for all random draws.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Number of Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub paths: usize,

    /// Worker threads; 0 uses the global pool.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Horizon in periods.
    #[arg(long, global = true, default_value_t = 252)]
    pub k: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a lattice market to a price file.
    Estimate(EstimateArgs),
    /// Monte Carlo gain-loss statistics of a policy on a fitted market.
    Simulate(SimulateArgs),
    /// Worst-case bound and positive-expectation certificates.
    Bounds(BoundsArgs),
    /// Weight frontier and traced optimal weights.
    Frontier(FrontierArgs),
    /// Out-of-sample execution of a policy on a price file.
    Backtest(BacktestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocKind {
    /// Equal weights 1/n.
    Ew,
    /// Capital weights read from --alloc-file.
    Cw,
    /// Proportional to absolute gain-loss over --train-prices.
    Gl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Simple,
    Compound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TopMode {
    /// Selected assets share the traced constant weight.
    Constant,
    /// Selected assets keep their own traced weight.
    Traced,
}

/// Policy parameters shared by every command that runs a policy.
#[derive(Debug, Clone, Args)]
pub struct TripleArgs {
    /// Fraction of each asset's capital in the long sub-account.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// One weight for every asset, or a comma-separated list.
    #[arg(long, default_value = "0.5", conflicts_with = "weights_from")]
    pub weights: String,

    /// Take the weights from the "weights" field of a frontier output.
    #[arg(long)]
    pub weights_from: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = AllocKind::Ew)]
    pub alloc: AllocKind,

    /// JSON array of weights, or an object mapping asset labels to weights.
    #[arg(long)]
    pub alloc_file: Option<PathBuf>,

    /// Price file whose gain-loss drives the gl allocation.
    #[arg(long)]
    pub train_prices: Option<PathBuf>,

    /// Annual risk-free rate as a decimal (0.0151 for 1.51%).
    #[arg(long, default_value_t = 0.0)]
    pub rf_annual: f64,

    #[arg(long, value_enum, default_value_t = Convention::Simple)]
    pub rate_convention: Convention,

    /// Transaction cost in basis points of traded notional.
    #[arg(long, default_value_t = 0.0)]
    pub cost_bps: f64,

    /// Initial capital.
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub prices: PathBuf,

    /// Markov memory length.
    #[arg(long, default_value_t = 1)]
    pub m: usize,

    /// Fitted market.
    #[arg(long)]
    pub out: PathBuf,

    /// Fit diagnostics and resolved configuration.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,

    #[command(flatten)]
    pub triple: TripleArgs,

    #[arg(long)]
    pub out: PathBuf,

    /// Per-stage mean, std and 95% band.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Write the prices of the first sampled path.
    #[arg(long)]
    pub prices_out: Option<PathBuf>,

    #[arg(long, default_value_t = 100.0)]
    pub initial_price: f64,

    /// Date of the first price row; later rows are consecutive days.
    #[arg(long, default_value = "2000-01-03")]
    pub start_date: chrono::NaiveDate,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub spec: PathBuf,

    #[command(flatten)]
    pub triple: TripleArgs,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FrontierArgs {
    #[arg(long)]
    pub spec: PathBuf,

    #[command(flatten)]
    pub triple: TripleArgs,

    /// Weight grid: a comma list or start:stop:step.
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: String,

    /// Standard deviation of G(k) to trace.
    #[arg(long)]
    pub target_std: f64,

    /// Trace a separate weight for each asset.
    #[arg(long)]
    pub per_asset: bool,

    /// Keep only the n assets with the largest traced gain-loss.
    #[arg(long)]
    pub top_n: Option<usize>,

    #[arg(long, value_enum, default_value_t = TopMode::Constant)]
    pub top_weight: TopMode,

    #[arg(long)]
    pub out: PathBuf,

    /// Constant-weight frontier as weight,mean,std.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    /// Out-of-sample price file.
    #[arg(long)]
    pub prices: PathBuf,

    #[command(flatten)]
    pub triple: TripleArgs,

    #[arg(long)]
    pub out: PathBuf,

    /// Gain-loss per period.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
