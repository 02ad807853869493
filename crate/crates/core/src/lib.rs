//! Spectral covariance shrinkage for maximum-Sharpe portfolios.
//!
//! The crate implements five eigenvalue-filtering estimators and the
//! machinery needed to compare them out of sample:
//!
//! - `UPSA`: a simplex-weighted mixture of ridge shrinkers whose weights are
//!   chosen by leave-one-out cross-validation of basis-portfolio returns.
//! - `AvgUPSA`: UPSA with the ridge weights replaced by their expanding-window
//!   time average.
//! - `AO`: Average Oracle filtering, which replaces correlation eigenvalues by
//!   an exponentially weighted, rank-wise average of past oracle eigenvalues.
//! - `UPSA-AO` / `AvgUPSA-AO`: UPSA (and its averaged variant) run on
//!   AO-prefiltered correlation matrices.
//!
//! Matrices are time-major throughout: a return matrix has one row per month
//! and one column per asset.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod data;
pub mod error;
pub mod oracle;
pub mod portfolio;
pub mod report;
pub mod ridge;
pub mod spectral;
pub mod stats;
pub mod upsa;

pub use backtest::{
    generate_synthetic_panel, run_backtest, run_backtest_with_oracles, sweep_grid_lower_bound,
    sweep_window_length, BacktestConfig, BacktestResult, EstimatorKind, EstimatorSeries,
    EstimatorSpec, SweepTable,
};
pub use data::{
    load_returns_csv, slice, walk_forward_splits, IndexRange, LoadOptions, LoadedPanel,
    MissingPolicy, ReturnsPanel, WindowSplit, YearMonth,
};
pub use error::{Error, Result};
pub use oracle::{
    ao_eigenvalues, ao_filter, build_oracle_history, oracle_eigenvalues, AoPrefilter,
    OracleHistory, OracleRecord,
};
pub use portfolio::{
    max_drawdown, max_sharpe_portfolio, oos_sharpe, scaled_cumulative_log_returns, turnover,
    Portfolio, PortfolioMetrics,
};
pub use ridge::{herfindahl, log_grid, shrink_eigenvalues, PenaltyGrid, RidgeWeights};
pub use spectral::{
    corr_to_cov, cov_to_corr, eig_psd, eig_sym, reconstruct, sample_moments, EigenSystem,
    SampleMoments,
};
pub use stats::{model_confidence_set, wilcoxon_one_sided, McsConfig, McsResult, WilcoxonResult};
pub use upsa::{
    average_weights, loo_basis_returns, solve_simplex_qp, upsa_covariance, BasisReturnMoments,
    BasisScaling, WeightHistory,
};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
