use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "upsa",
    version,
    about = "Spectral covariance shrinkage backtests"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk-forward backtest of the selected estimators.
    Backtest(BacktestArgs),
    /// One backtest per grid lower bound or calibration window length.
    Sweep(SweepArgs),
    /// Write a synthetic return panel.
    Synth(SynthArgs),
}

/// Options shared by `backtest` and `sweep`. Unset options fall back to the
/// config file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Return panel CSV: a `date` column (YYYY-MM) and one column per asset.
    #[arg(long)]
    pub data: PathBuf,

    /// TOML file with any of the options below.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory (default: $UPSA_OUT_DIR, else ./upsa-out).
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub t_is: Option<usize>,
    #[arg(long)]
    pub t_oos: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub half_life: Option<f64>,

    /// First rebalance month evaluated (YYYY-MM).
    #[arg(long)]
    pub eval_start: Option<String>,
    /// Last rebalance month evaluated (YYYY-MM).
    #[arg(long)]
    pub eval_end: Option<String>,

    /// Comma-separated estimators: sample, upsa, avgupsa, ao, upsa-ao, avgupsa-ao.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,

    /// Keep AO-filtered correlations as they are instead of rescaling to unit diagonal.
    #[arg(long)]
    pub no_ao_renorm: bool,

    /// Basis portfolio scaling inside cross-validation: gross-exposure or raw.
    #[arg(long)]
    pub basis_scaling: Option<String>,

    /// Missing-data policy: strict or drop-incomplete.
    #[arg(long)]
    pub missing: Option<String>,

    /// Directory for cached oracle eigenvalues.
    #[arg(long)]
    pub oracle_cache: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub run: RunArgs,

    #[arg(long)]
    pub grid_lo: Option<f64>,

    /// MCS size.
    #[arg(long)]
    pub mcs_alpha: Option<f64>,
    /// MCS bootstrap block length, in months.
    #[arg(long)]
    pub mcs_block: Option<usize>,
    /// MCS bootstrap replicas.
    #[arg(long)]
    pub mcs_boot: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("swept").required(true).args(["grid_lo", "window"])))]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Grid lower bounds, comma-separated.
    #[arg(long)]
    pub grid_lo: Option<String>,

    /// Calibration lengths: `a..b:step` or a comma-separated list.
    #[arg(long)]
    pub window: Option<String>,

    /// Sweep name used in `sweep_<name>.csv` (default: grid_lo or window).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub months: usize,
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (default: <out dir>/synthetic.csv).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
