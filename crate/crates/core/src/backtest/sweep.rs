//! Experiment sweeps: one full backtest per parameter value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_backtest, run_backtest_with_oracles, BacktestConfig};
use crate::data::ReturnsPanel;
use crate::error::{Error, Result};
use crate::oracle::oracle_records;
use crate::ridge::log_grid;

/// Mean annualized Sharpe per `(parameter value, estimator)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Name of the swept parameter, e.g. `grid_lo` or `t_is`.
    pub parameter: String,
    pub values: Vec<f64>,
    pub estimators: Vec<String>,
    /// `mean_sharpe[row][col]` for `values[row]` and `estimators[col]`.
    pub mean_sharpe: Vec<Vec<f64>>,
    /// Number of rebalance dates behind each row.
    pub n_dates: Vec<usize>,
}

impl SweepTable {
    /// Column of one estimator across the swept values.
    pub fn column(&self, estimator: &str) -> Option<Vec<f64>> {
        let c = self.estimators.iter().position(|e| e == estimator)?;
        Some(self.mean_sharpe.iter().map(|row| row[c]).collect())
    }
}

fn sweep<T: Sync>(
    parameter: &str,
    values: &[T],
    as_f64: impl Fn(&T) -> f64,
    configure: impl Fn(&T) -> Result<BacktestConfig> + Sync,
    run: impl Fn(&BacktestConfig) -> Result<crate::backtest::BacktestResult> + Sync,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("empty {parameter} sweep")));
    }
    let configs = values.iter().map(&configure).collect::<Result<Vec<_>>>()?;
    let results = configs.par_iter().map(&run).collect::<Result<Vec<_>>>()?;
    let estimators = results[0].names();
    Ok(SweepTable {
        parameter: parameter.to_string(),
        values: values.iter().map(as_f64).collect(),
        mean_sharpe: results
            .iter()
            .map(|r| r.series.iter().map(|s| s.mean_sharpe()).collect())
            .collect(),
        n_dates: results.iter().map(|r| r.dates.len()).collect(),
        estimators,
    })
}

/// Re-runs the backtest with each ridge grid's lower bound replaced by `lo`,
/// keeping its upper bound and point count.
pub fn sweep_grid_lower_bound(
    panel: &ReturnsPanel,
    config: &BacktestConfig,
    lo_values: &[f64],
) -> Result<SweepTable> {
    if lo_values.is_empty() {
        return Err(Error::InvalidConfig("empty grid_lo sweep".into()));
    }
    config.validate()?;
    // the grid does not enter the oracles, so one record set serves every row
    let records = if config.estimators.iter().any(|e| e.kind.uses_ao()) {
        oracle_records(panel, config.t_is, config.t_oos)?
    } else {
        Vec::new()
    };
    let run = |c: &BacktestConfig| run_backtest_with_oracles(panel, c, &records);
    sweep(
        "grid_lo",
        lo_values,
        |v| *v,
        |&lo| {
            let mut c = config.clone();
            for e in &mut c.estimators {
                if let Some(g) = &e.grid {
                    let z = g.penalties();
                    e.grid = Some(log_grid(lo, z[z.len() - 1], z.len())?);
                }
            }
            Ok(c)
        },
        run,
    )
}

/// Re-runs the backtest for each calibration length; oracle histories are
/// rebuilt with that length.
pub fn sweep_window_length(
    panel: &ReturnsPanel,
    config: &BacktestConfig,
    t_values: &[usize],
) -> Result<SweepTable> {
    sweep(
        "t_is",
        t_values,
        |v| *v as f64,
        |&t| {
            Ok(BacktestConfig {
                t_is: t,
                ..config.clone()
            })
        },
        |c| run_backtest(panel, c),
    )
}
