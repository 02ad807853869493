//! Paired significance tests over per-rebalance Sharpe series.

mod mcs;
mod wilcoxon;

pub use mcs::{model_confidence_set, McsConfig, McsResult, McsStep};
pub use wilcoxon::{wilcoxon_one_sided, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N};
