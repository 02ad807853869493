//! Maximum-Sharpe portfolios and out-of-sample performance metrics.
//!
//! Portfolios are normalized to unit gross exposure (`sum |w| = 1`). Sharpe
//! ratios use the `1/dt` realized variance and are annualized by `sqrt(12)`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::data::YearMonth;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub const MONTHS_PER_YEAR: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub weights: Vector,
    pub asof: Option<YearMonth>,
}

impl Portfolio {
    /// Wraps raw exposures, rescaling them to unit gross exposure.
    pub fn from_direction(direction: Vector, asof: Option<YearMonth>) -> Result<Self> {
        Ok(Self {
            weights: normalize_gross(direction)?,
            asof,
        })
    }

    pub fn gross_exposure(&self) -> f64 {
        self.weights.lp_norm(1)
    }

    pub fn net_exposure(&self) -> f64 {
        self.weights.sum()
    }

    /// Inverse sum of squared weights.
    pub fn diversification(&self) -> f64 {
        1.0 / self.weights.norm_squared()
    }

    /// Weights rescaled to `sum w = 1`, when the net exposure is positive.
    pub fn budget_normalized(&self) -> Option<Vector> {
        let net = self.net_exposure();
        (net > 0.0).then(|| &self.weights / net)
    }
}

pub(crate) fn normalize_gross(v: Vector) -> Result<Vector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("portfolio weights"));
    }
    let gross = v.lp_norm(1);
    if gross == 0.0 {
        return Err(Error::ZeroMean);
    }
    Ok(v / gross)
}

/// Unnormalized solution of `cov * w = mu` through a Cholesky factorization.
pub fn max_sharpe_direction(cov: &Matrix, mu: &Vector) -> Result<Vector> {
    if cov.nrows() != cov.ncols() || cov.nrows() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            actual: mu.len(),
        });
    }
    if mu.iter().any(|x| !x.is_finite()) || cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("max-Sharpe inputs"));
    }
    if mu.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMean);
    }
    let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(mu))
}

/// `w ∝ cov^{-1} mu`, normalized to unit gross exposure.
pub fn max_sharpe_portfolio(cov: &Matrix, mu: &Vector) -> Result<Portfolio> {
    Portfolio::from_direction(max_sharpe_direction(cov, mu)?, None)
}

/// Max-Sharpe portfolio through the pseudo-inverse of a PSD covariance:
/// eigenvalues below `1e-12 * lambda_max` are treated as zero.
pub fn pinv_max_sharpe_portfolio(cov: &Matrix, mu: &Vector) -> Result<Portfolio> {
    if mu.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroMean);
    }
    let es = crate::spectral::eig_psd(cov)?;
    let top = es.eigenvalues.max();
    if !(top > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let inv = es
        .eigenvalues
        .map(|l| if l > 1e-12 * top { 1.0 / l } else { 0.0 });
    Portfolio::from_direction(es.apply(&inv, mu), None)
}

/// Per-month returns `w^T x_t` of a portfolio over a time-major sample.
pub fn portfolio_returns(p: &Portfolio, x: &Matrix) -> Result<Vec<f64>> {
    if x.ncols() != p.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: p.weights.len(),
            actual: x.ncols(),
        });
    }
    Ok((x * &p.weights).iter().copied().collect())
}

/// Annualized mean over `1/dt` standard deviation of monthly returns.
pub fn annualized_sharpe(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::SeriesTooShort {
            required: 2,
            actual: returns.len(),
        });
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = returns.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if !(std > 1e-12 * scale) {
        return Err(Error::DegenerateVariance);
    }
    Ok(mean / std * MONTHS_PER_YEAR.sqrt())
}

/// Realized out-of-sample Sharpe ratio of `p` over `x_oos`, annualized.
pub fn oos_sharpe(p: &Portfolio, x_oos: &Matrix) -> Result<f64> {
    annualized_sharpe(&portfolio_returns(p, x_oos)?)
}

/// L1 distance between consecutive portfolios.
pub fn turnover(prev: &Portfolio, next: &Portfolio) -> f64 {
    (&next.weights - &prev.weights).lp_norm(1)
}

/// Dated monthly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    pub dates: Vec<YearMonth>,
    pub values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(dates: Vec<YearMonth>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                actual: values.len(),
            });
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Centered rolling window: three months before, the current month and two
/// after, truncated at the series edges.
const ROLL_BEFORE: usize = 3;
const ROLL_AFTER: usize = 2;

/// Volatility-targeted cumulative log returns.
///
/// Each return is divided by its centered 6-month rolling standard deviation,
/// scaled to `target_vol` annualized, converted to `log(1 + r)` and cumulated.
pub fn scaled_cumulative_log_returns(series: &DatedSeries, target_vol: f64) -> Result<DatedSeries> {
    let r = &series.values;
    let len = r.len();
    if len < ROLL_BEFORE + 1 + ROLL_AFTER {
        return Err(Error::SeriesTooShort {
            required: ROLL_BEFORE + 1 + ROLL_AFTER,
            actual: len,
        });
    }
    let monthly_target = target_vol / MONTHS_PER_YEAR.sqrt();
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let lo = t.saturating_sub(ROLL_BEFORE);
        let hi = (t + ROLL_AFTER + 1).min(len);
        let w = &r[lo..hi];
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroRollingStd(t));
        }
        cum += (1.0 + r[t] / sd * monthly_target).ln();
        out.push(cum);
    }
    DatedSeries::new(series.dates.clone(), out)
}

/// Largest peak-to-trough fall of a cumulative log-return series, reported
/// as the fraction `1 - exp(-depth)`.
pub fn max_drawdown(cum_log: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut depth = 0.0_f64;
    for &v in cum_log {
        peak = peak.max(v);
        depth = depth.max(peak - v);
    }
    1.0 - (-depth).exp()
}

/// Summary row of a portfolio series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioMetrics {
    /// Mean of the per-rebalance annualized OOS Sharpe ratios.
    pub sharpe_annualized: f64,
    /// Mean of `1 / sum w^2` under gross normalization.
    pub diversification: f64,
    /// Mean L1 change between consecutive gross-normalized portfolios.
    pub turnover: f64,
    /// Mean `sum |w|` of the budget-normalized (`sum w = 1`) portfolios,
    /// over dates with positive net exposure. NaN when there are none.
    pub gross_leverage: f64,
    /// Maximum drawdown of the volatility-targeted cumulative log returns.
    pub max_drawdown: f64,
}

/// Annualized volatility target used for drawdown reporting.
pub const DRAWDOWN_TARGET_VOL: f64 = 0.10;

impl PortfolioMetrics {
    /// `portfolios`, `sharpes` and `next_returns` are aligned by rebalance
    /// date; `next_returns` holds each portfolio's return over the month
    /// following its rebalance.
    pub fn from_series(
        dates: &[YearMonth],
        portfolios: &[Portfolio],
        sharpes: &[f64],
        next_returns: &[f64],
    ) -> Result<Self> {
        let n = portfolios.len();
        if n == 0 || sharpes.len() != n || next_returns.len() != n || dates.len() != n {
            return Err(Error::SeriesTooShort {
                required: 1,
                actual: n.min(sharpes.len()).min(next_returns.len()),
            });
        }
        let mean = |v: &mut dyn Iterator<Item = f64>| {
            let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            if c == 0 {
                f64::NAN
            } else {
                s / c as f64
            }
        };
        let sharpe_annualized = mean(&mut sharpes.iter().copied());
        let diversification = mean(&mut portfolios.iter().map(Portfolio::diversification));
        let turnover = if n > 1 {
            mean(&mut portfolios.windows(2).map(|w| turnover(&w[0], &w[1])))
        } else {
            0.0
        };
        let gross_leverage = mean(
            &mut portfolios
                .iter()
                .filter_map(|p| p.budget_normalized().map(|b| b.lp_norm(1))),
        );
        let series = DatedSeries::new(dates.to_vec(), next_returns.to_vec())?;
        // Short or flat series cannot be volatility-scaled; fall back to the
        // raw cumulative log returns.
        let cum = match scaled_cumulative_log_returns(&series, DRAWDOWN_TARGET_VOL) {
            Ok(s) => s.values,
            Err(_) => next_returns
                .iter()
                .scan(0.0, |acc, r| {
                    *acc += (1.0 + r).ln();
                    Some(*acc)
                })
                .collect(),
        };
        Ok(Self {
            sharpe_annualized,
            diversification,
            turnover,
            gross_leverage,
            max_drawdown: max_drawdown(&cum),
        })
    }
}
