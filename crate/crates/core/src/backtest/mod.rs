//! Walk-forward backtests of the shrinkage estimators.
//!
//! A run has three passes over the rebalance dates:
//!
//! 1. per date, the AO spectrum of every distinct AO configuration and the
//!    cross-validated ridge weights of every distinct ridge source;
//! 2. in date order, the expanding means used by the averaged estimators;
//! 3. per date, the filtered covariance, the max-Sharpe portfolio and its
//!    realized out-of-sample Sharpe ratio.
//!
//! Passes 1 and 3 only read rows up to each date's test window, so
//! truncating the panel never changes earlier results.

mod sweep;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{slice, walk_forward_splits, ReturnsPanel, WindowSplit, YearMonth};
use crate::error::{Error, Result};
use crate::oracle::{ao_eigenvalues, oracle_records, AoPrefilter, OracleHistory, OracleRecord};
use crate::portfolio::{
    max_sharpe_portfolio, oos_sharpe, pinv_max_sharpe_portfolio, portfolio_returns, Portfolio,
    PortfolioMetrics,
};
use crate::ridge::{log_grid, PenaltyGrid, RidgeWeights};
use crate::spectral::sample_moments;
use crate::upsa::{loo_basis_returns_with, solve_simplex_qp, BasisScaling, UpsaFit, WeightHistory};
use crate::{Matrix, Vector};

pub use sweep::{sweep_grid_lower_bound, sweep_window_length, SweepTable};
pub use synthetic::generate_synthetic_panel;

pub const DEFAULT_T_IS: usize = 120;
pub const DEFAULT_T_OOS: usize = 6;
pub const DEFAULT_GRID_LO: f64 = 1e-8;
pub const DEFAULT_GRID_HI: f64 = 1e-1;
pub const DEFAULT_GRID_N: usize = 20;
pub const DEFAULT_HALF_LIFE: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    SampleCov,
    Upsa,
    AvgUpsa,
    Ao,
    UpsaAo,
    AvgUpsaAo,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        Self::SampleCov,
        Self::Upsa,
        Self::AvgUpsa,
        Self::Ao,
        Self::UpsaAo,
        Self::AvgUpsaAo,
    ];

    /// The five shrinkage estimators, without the sample baseline.
    pub const SHRINKAGE: [EstimatorKind; 5] = [
        Self::Upsa,
        Self::AvgUpsa,
        Self::Ao,
        Self::UpsaAo,
        Self::AvgUpsaAo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SampleCov => "SampleCov",
            Self::Upsa => "UPSA",
            Self::AvgUpsa => "AvgUPSA",
            Self::Ao => "AO",
            Self::UpsaAo => "UPSA-AO",
            Self::AvgUpsaAo => "AvgUPSA-AO",
        }
    }

    pub fn uses_ridge(self) -> bool {
        matches!(
            self,
            Self::Upsa | Self::AvgUpsa | Self::UpsaAo | Self::AvgUpsaAo
        )
    }

    pub fn uses_ao(self) -> bool {
        matches!(self, Self::Ao | Self::UpsaAo | Self::AvgUpsaAo)
    }

    pub fn is_averaged(self) -> bool {
        matches!(self, Self::AvgUpsa | Self::AvgUpsaAo)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "samplecov" | "sample" => Ok(Self::SampleCov),
            "upsa" => Ok(Self::Upsa),
            "avgupsa" => Ok(Self::AvgUpsa),
            "ao" => Ok(Self::Ao),
            "upsaao" => Ok(Self::UpsaAo),
            "avgupsaao" => Ok(Self::AvgUpsaAo),
            _ => Err(Error::InvalidConfig(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Ridge penalties; present exactly for the ridge-mixing kinds.
    pub grid: Option<PenaltyGrid>,
    /// EWMA half-life of the oracle history, in months.
    pub half_life: f64,
    pub renormalize_ao_diag: bool,
}

impl EstimatorSpec {
    /// Spec with the default grid and half-life.
    pub fn new(kind: EstimatorKind) -> Self {
        let grid = kind.uses_ridge().then(|| {
            log_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_N)
                .expect("default grid is valid")
        });
        Self {
            kind,
            grid,
            half_life: DEFAULT_HALF_LIFE,
            renormalize_ao_diag: true,
        }
    }

    pub fn with_grid(mut self, grid: PenaltyGrid) -> Self {
        if self.kind.uses_ridge() {
            self.grid = Some(grid);
        }
        self
    }

    pub fn with_half_life(mut self, half_life: f64) -> Self {
        self.half_life = half_life;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn validate(&self) -> Result<()> {
        if self.kind.uses_ridge() != self.grid.is_some() {
            return Err(Error::InvalidConfig(format!(
                "{}: a penalty grid is required exactly for ridge-mixing estimators",
                self.kind
            )));
        }
        if self.kind.uses_ao() && !(self.half_life > 0.0 && self.half_life.is_finite()) {
            return Err(Error::InvalidHalfLife(self.half_life));
        }
        Ok(())
    }

    fn ao_key(&self) -> Option<AoKey> {
        self.kind.uses_ao().then_some(AoKey {
            half_life: self.half_life,
            renormalize: self.renormalize_ao_diag,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub t_is: usize,
    pub t_oos: usize,
    pub step: usize,
    /// First rebalance date considered, inclusive.
    pub eval_start: Option<YearMonth>,
    /// Last rebalance date considered, inclusive.
    pub eval_end: Option<YearMonth>,
    pub estimators: Vec<EstimatorSpec>,
    /// Seed recorded for synthetic runs; the backtest itself is deterministic.
    pub seed: u64,
    pub basis_scaling: BasisScaling,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            t_is: DEFAULT_T_IS,
            t_oos: DEFAULT_T_OOS,
            step: 1,
            eval_start: None,
            eval_end: None,
            estimators: EstimatorKind::SHRINKAGE
                .iter()
                .map(|&k| EstimatorSpec::new(k))
                .collect(),
            seed: 0,
            basis_scaling: BasisScaling::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_is < 3 {
            return Err(Error::InvalidConfig(format!(
                "t_is must be at least 3, got {}",
                self.t_is
            )));
        }
        if self.t_oos < 2 {
            return Err(Error::InvalidConfig(format!(
                "t_oos must be at least 2, got {}",
                self.t_oos
            )));
        }
        if self.step == 0 {
            return Err(Error::InvalidConfig("step must be positive".into()));
        }
        if let (Some(a), Some(b)) = (self.eval_start, self.eval_end) {
            if b < a {
                return Err(Error::InvalidConfig(format!(
                    "eval_end {b} precedes eval_start {a}"
                )));
            }
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        for (i, e) in self.estimators.iter().enumerate() {
            e.validate()?;
            if self.estimators[..i].iter().any(|p| p.kind == e.kind) {
                return Err(Error::InvalidConfig(format!(
                    "estimator {} listed twice",
                    e.kind
                )));
            }
        }
        Ok(())
    }
}

/// Dated output of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSeries {
    pub name: String,
    pub kind: EstimatorKind,
    pub dates: Vec<YearMonth>,
    pub portfolios: Vec<Portfolio>,
    /// Annualized Sharpe ratio over each date's test window.
    pub sharpe: Vec<f64>,
    /// Return over the first month after each rebalance.
    pub next_month_returns: Vec<f64>,
    /// Ridge weights actually applied (running means for averaged kinds).
    pub weights: Option<Vec<RidgeWeights>>,
    pub metrics: PortfolioMetrics,
    /// L1 changes between consecutive ridge weight vectors.
    pub weight_turnover: Vec<f64>,
}

impl EstimatorSeries {
    pub fn mean_sharpe(&self) -> f64 {
        self.metrics.sharpe_annualized
    }

    pub fn mean_weight_turnover(&self) -> Option<f64> {
        (!self.weight_turnover.is_empty())
            .then(|| self.weight_turnover.iter().sum::<f64>() / self.weight_turnover.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    /// Rebalance dates shared by every series.
    pub dates: Vec<YearMonth>,
    pub series: Vec<EstimatorSeries>,
}

impl BacktestResult {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    pub fn by_name(&self, name: &str) -> Option<&EstimatorSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Per-date Sharpe series as a `dates x estimators` matrix.
    pub fn sharpe_matrix(&self) -> Matrix {
        Matrix::from_fn(self.dates.len(), self.series.len(), |r, c| {
            self.series[c].sharpe[r]
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.series.iter().map(|s| s.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AoKey {
    half_life: f64,
    renormalize: bool,
}

/// A distinct `(grid, AO prefilter)` pair whose weights are cross-validated.
#[derive(Debug, Clone, PartialEq)]
struct RidgeSource {
    grid: PenaltyGrid,
    ao: Option<usize>,
}

/// Estimator wiring into the deduplicated AO and ridge sources.
struct Plan {
    ao_keys: Vec<AoKey>,
    sources: Vec<RidgeSource>,
    /// Per estimator: AO index and ridge-source index.
    links: Vec<(Option<usize>, Option<usize>)>,
}

fn index_or_push<T: PartialEq>(items: &mut Vec<T>, item: T) -> usize {
    match items.iter().position(|x| *x == item) {
        Some(i) => i,
        None => {
            items.push(item);
            items.len() - 1
        }
    }
}

impl Plan {
    fn new(config: &BacktestConfig) -> Self {
        let mut ao_keys = Vec::new();
        let mut sources = Vec::new();
        let links = config
            .estimators
            .iter()
            .map(|e| {
                let ao = e.ao_key().map(|k| index_or_push(&mut ao_keys, k));
                let ridge = e
                    .grid
                    .clone()
                    .map(|grid| index_or_push(&mut sources, RidgeSource { grid, ao }));
                (ao, ridge)
            })
            .collect();
        Self {
            ao_keys,
            sources,
            links,
        }
    }
}

/// Rebalance splits inside the configured evaluation window.
fn eval_splits(panel: &ReturnsPanel, config: &BacktestConfig) -> Result<Vec<WindowSplit>> {
    Ok(
        walk_forward_splits(panel, config.t_is, config.t_oos, config.step)?
            .into_iter()
            .filter(|s| config.eval_start.is_none_or(|a| s.rebalance_date >= a))
            .filter(|s| config.eval_end.is_none_or(|b| s.rebalance_date <= b))
            .collect(),
    )
}

/// Records usable at a rebalance: those whose test window ended by then.
fn past_records(records: &[OracleRecord], asof: YearMonth) -> &[OracleRecord] {
    &records[..records.partition_point(|r| r.date < asof)]
}

fn ao_spectrum(records: &[OracleRecord], key: AoKey, asof: YearMonth) -> Result<Vector> {
    let history = OracleHistory::from_records(past_records(records, asof).to_vec(), key.half_life)?;
    ao_eigenvalues(&history, asof)
}

fn ridge_weights(
    x_cal: &Matrix,
    source: &RidgeSource,
    prefilters: &[AoPrefilter],
    scaling: BasisScaling,
) -> Result<RidgeWeights> {
    let pre = source.ao.map(|i| &prefilters[i]);
    solve_simplex_qp(&loo_basis_returns_with(x_cal, &source.grid, pre, scaling)?)
}

/// Per-date state produced by the first pass.
struct DateState {
    prefilters: Vec<AoPrefilter>,
    weights: Vec<RidgeWeights>,
}

fn first_pass(
    panel: &ReturnsPanel,
    config: &BacktestConfig,
    plan: &Plan,
    records: &[OracleRecord],
    split: &WindowSplit,
) -> Result<DateState> {
    let asof = split.rebalance_date.add_months(1);
    let x_cal = slice(panel, split.cal_range)?;
    let prefilters = plan
        .ao_keys
        .iter()
        .map(|&k| {
            Ok(AoPrefilter {
                lam_ao: ao_spectrum(records, k, asof)?,
                renormalize: k.renormalize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = plan
        .sources
        .iter()
        .map(|src| ridge_weights(&x_cal, src, &prefilters, config.basis_scaling))
        .collect::<Result<Vec<_>>>()?;
    Ok(DateState {
        prefilters,
        weights,
    })
}

struct DateOutput {
    portfolios: Vec<Portfolio>,
    sharpe: Vec<f64>,
    next_returns: Vec<f64>,
}

pub fn run_backtest(panel: &ReturnsPanel, config: &BacktestConfig) -> Result<BacktestResult> {
    config.validate()?;
    let records = if config.estimators.iter().any(|e| e.kind.uses_ao()) {
        oracle_records(panel, config.t_is, config.t_oos)?
    } else {
        Vec::new()
    };
    run_backtest_with_oracles(panel, config, &records)
}

/// [`run_backtest`] with precomputed oracle records, e.g. from a cache.
/// `records` must be the `(t_is, t_oos)` records of this panel in date order;
/// only those dated before each query month are read.
pub fn run_backtest_with_oracles(
    panel: &ReturnsPanel,
    config: &BacktestConfig,
    records: &[OracleRecord],
) -> Result<BacktestResult> {
    config.validate()?;
    if let Some(bad) = records.windows(2).find(|w| w[1].date <= w[0].date) {
        return Err(Error::UnorderedHistory {
            prev: bad[0].date,
            next: bad[1].date,
        });
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.lam_oracle.len() != panel.n_assets())
    {
        return Err(Error::DimensionMismatch {
            expected: panel.n_assets(),
            actual: r.lam_oracle.len(),
        });
    }
    let splits = eval_splits(panel, config)?;
    let plan = Plan::new(config);

    // AO burn-in: keep dates whose first test month has at least one record
    // strictly before it; history only grows, so this is a suffix.
    let splits: Vec<WindowSplit> = if plan.ao_keys.is_empty() {
        splits
    } else {
        splits
            .into_iter()
            .filter(|s| !past_records(records, s.rebalance_date.add_months(1)).is_empty())
            .collect()
    };
    if splits.is_empty() {
        return Err(Error::PanelTooShort {
            required: config.t_is
                + config.t_oos
                + if plan.ao_keys.is_empty() {
                    0
                } else {
                    config.t_oos
                },
            available: panel.len(),
        });
    }

    let states: Vec<DateState> = splits
        .par_iter()
        .map(|s| first_pass(panel, config, &plan, records, s).map_err(|e| e.at(s.rebalance_date)))
        .collect::<Result<_>>()?;

    let dates: Vec<YearMonth> = splits.iter().map(|s| s.rebalance_date).collect();
    let means: Vec<Vec<RidgeWeights>> = (0..plan.sources.len())
        .map(|k| {
            let mut h = WeightHistory::new();
            for (d, st) in dates.iter().zip(&states) {
                h.push(*d, st.weights[k].clone())?;
            }
            Ok(h.running_means())
        })
        .collect::<Result<_>>()?;

    let applied = |e: usize, i: usize| -> Option<&RidgeWeights> {
        let src = plan.links[e].1?;
        Some(if config.estimators[e].kind.is_averaged() {
            &means[src][i]
        } else {
            &states[i].weights[src]
        })
    };

    let outputs: Vec<DateOutput> = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            evaluate_date(panel, config, &plan, s, &states[i], |e| applied(e, i))
                .map_err(|e| e.at(s.rebalance_date))
        })
        .collect::<Result<_>>()?;

    let series = config
        .estimators
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let portfolios: Vec<Portfolio> =
                outputs.iter().map(|o| o.portfolios[e].clone()).collect();
            let sharpe: Vec<f64> = outputs.iter().map(|o| o.sharpe[e]).collect();
            let next: Vec<f64> = outputs.iter().map(|o| o.next_returns[e]).collect();
            let weights: Option<Vec<RidgeWeights>> = plan.links[e].1.map(|_| {
                (0..dates.len())
                    .map(|i| applied(e, i).unwrap().clone())
                    .collect()
            });
            let weight_turnover = weights
                .as_ref()
                .map(|w| w.windows(2).map(|p| p[1].turnover(&p[0])).collect())
                .unwrap_or_default();
            let metrics = PortfolioMetrics::from_series(&dates, &portfolios, &sharpe, &next)?;
            Ok(EstimatorSeries {
                name: spec.name().to_string(),
                kind: spec.kind,
                dates: dates.clone(),
                portfolios,
                sharpe,
                next_month_returns: next,
                weights,
                metrics,
                weight_turnover,
            })
        })
        .collect::<Result<_>>()?;

    Ok(BacktestResult { dates, series })
}

fn evaluate_date<'a>(
    panel: &ReturnsPanel,
    config: &BacktestConfig,
    plan: &Plan,
    split: &WindowSplit,
    state: &DateState,
    applied: impl Fn(usize) -> Option<&'a RidgeWeights>,
) -> Result<DateOutput> {
    let date = split.rebalance_date;
    let x_cal = slice(panel, split.cal_range)?;
    let x_oos = slice(panel, split.test_range)?;
    let moments = sample_moments(&x_cal)?;
    // one decomposition per ridge source, shared by plain and averaged kinds
    let mut fits: Vec<Option<UpsaFit>> = vec![None; plan.sources.len()];

    let mut out = DateOutput {
        portfolios: Vec::with_capacity(config.estimators.len()),
        sharpe: Vec::with_capacity(config.estimators.len()),
        next_returns: Vec::with_capacity(config.estimators.len()),
    };
    for (e, spec) in config.estimators.iter().enumerate() {
        let (ao, ridge) = plan.links[e];
        let mut p = match (spec.kind, ridge) {
            (EstimatorKind::SampleCov, _) => {
                pinv_max_sharpe_portfolio(&moments.cov, &moments.mean)?
            }
            (EstimatorKind::Ao, _) => {
                let pre = &state.prefilters[ao.expect("AO estimator has an AO source")];
                max_sharpe_portfolio(&pre.apply(&moments.cov)?, &moments.mean)?
            }
            (_, Some(src)) => {
                if fits[src].is_none() {
                    let source = &plan.sources[src];
                    let pre = source.ao.map(|a| &state.prefilters[a]);
                    fits[src] = Some(UpsaFit::from_window(
                        &x_cal,
                        &source.grid,
                        pre,
                        state.weights[src].clone(),
                    )?);
                }
                let fit = fits[src].as_ref().unwrap();
                let alpha = applied(e).expect("ridge estimator has weights");
                Portfolio::from_direction(fit.direction_for(alpha)?, None)?
            }
            (kind, None) => unreachable!("{kind} validated to carry a grid"),
        };
        p.asof = Some(date);
        out.sharpe.push(oos_sharpe(&p, &x_oos)?);
        out.next_returns
            .push(portfolio_returns(&p, &x_oos.rows(0, 1).into_owned())?[0]);
        out.portfolios.push(p);
    }
    Ok(out)
}
