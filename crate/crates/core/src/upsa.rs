//! Universal Portfolio Shrinkage Approximator.
//!
//! For every leave-one-out fold of the calibration window and every ridge
//! penalty `z_i`, a basis portfolio `V diag(1/(lambda + z_i)) V^T mu` is
//! built from the fold's (optionally AO-prefiltered) moments and evaluated on
//! the held-out month. The fold-averaged mean `m` and covariance `S` of
//! those basis returns define the simplex QP
//!
//! ```text
//! max  alpha^T m - 1/2 alpha^T S alpha   s.t.  alpha >= 0, sum(alpha) = 1
//! ```
//!
//! whose solution mixes the ridge resolvents into one shrinkage function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::YearMonth;
use crate::error::{Error, Result};
use crate::oracle::AoPrefilter;
use crate::portfolio::normalize_gross;
use crate::ridge::{shrink_eigenvalues, PenaltyGrid, RidgeWeights};
use crate::spectral::{eig_psd, sample_moments, EigenSystem};
use crate::{Matrix, Vector};

/// How basis portfolios are scaled before their held-out return is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisScaling {
    /// Unit gross exposure, so basis returns are commensurate across ridges.
    #[default]
    GrossExposure,
    /// Raw `(Sigma + z I)^{-1} mu` exposures.
    Raw,
}

/// Held-out mean and covariance of the ridge basis returns.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisReturnMoments {
    pub m: Vector,
    pub s: Matrix,
    pub folds: usize,
}

/// Covariance a fold or window is filtered with before ridge shrinkage.
fn filtered_moments(x: &Matrix, prefilter: Option<&AoPrefilter>) -> Result<(EigenSystem, Vector)> {
    let moments = sample_moments(x)?;
    let cov = match prefilter {
        Some(ao) => ao.apply(&moments.cov)?,
        None => moments.cov,
    };
    Ok((eig_psd(&cov)?, moments.mean))
}

fn ridge_direction(es: &EigenSystem, coords: &Vector, z: f64) -> Vector {
    let scaled = Vector::from_iterator(
        coords.len(),
        coords
            .iter()
            .zip(es.eigenvalues.iter())
            .map(|(c, l)| c / (l + z)),
    );
    &es.eigenvectors * scaled
}

fn without_row(x: &Matrix, t: usize) -> Matrix {
    x.clone().remove_row(t)
}

/// Basis portfolios of fold `t`: one per grid penalty, built from every
/// calibration row except `t`.
pub fn fold_basis_portfolios(
    x_cal: &Matrix,
    t: usize,
    grid: &PenaltyGrid,
    prefilter: Option<&AoPrefilter>,
    scaling: BasisScaling,
) -> Result<Vec<Vector>> {
    if t >= x_cal.nrows() {
        return Err(Error::OutOfBounds {
            start: t,
            end: t + 1,
            len: x_cal.nrows(),
        });
    }
    let (es, mean) = filtered_moments(&without_row(x_cal, t), prefilter)?;
    let coords = es.eigenvectors.tr_mul(&mean);
    grid.penalties()
        .iter()
        .map(|&z| {
            let d = ridge_direction(&es, &coords, z);
            match scaling {
                BasisScaling::GrossExposure => normalize_gross(d),
                BasisScaling::Raw => Ok(d),
            }
        })
        .collect()
}

/// Leave-one-out basis-return moments with the default scaling.
pub fn loo_basis_returns(
    x_cal: &Matrix,
    grid: &PenaltyGrid,
    prefilter: Option<&AoPrefilter>,
) -> Result<BasisReturnMoments> {
    loo_basis_returns_with(x_cal, grid, prefilter, BasisScaling::default())
}

pub fn loo_basis_returns_with(
    x_cal: &Matrix,
    grid: &PenaltyGrid,
    prefilter: Option<&AoPrefilter>,
    scaling: BasisScaling,
) -> Result<BasisReturnMoments> {
    let folds = x_cal.nrows();
    if folds < 3 {
        return Err(Error::InsufficientData {
            required: 3,
            actual: folds,
        });
    }
    let ell = grid.len();
    let fold_returns: Vec<Vector> = (0..folds)
        .into_par_iter()
        .map(|t| {
            let held_out = x_cal.row(t).transpose();
            let ports = fold_basis_portfolios(x_cal, t, grid, prefilter, scaling)?;
            Ok(Vector::from_iterator(
                ell,
                ports.iter().map(|p| p.dot(&held_out)),
            ))
        })
        .collect::<Result<_>>()?;

    let mut m = Vector::zeros(ell);
    for r in &fold_returns {
        m += r;
    }
    m /= folds as f64;
    let mut s = Matrix::zeros(ell, ell);
    for r in &fold_returns {
        let c = r - &m;
        s.ger(1.0, &c, &c, 1.0);
    }
    s /= folds as f64;
    crate::spectral::symmetrize(&mut s);
    Ok(BasisReturnMoments { m, s, folds })
}

/// `alpha^T m - 1/2 alpha^T S alpha`.
pub fn qp_objective(moments: &BasisReturnMoments, alpha: &[f64]) -> f64 {
    let a = Vector::from_row_slice(alpha);
    a.dot(&moments.m) - 0.5 * a.dot(&(&moments.s * &a))
}

const QP_MAX_ITER: usize = 1_000_000;
const QP_REFRESH: usize = 64;

/// Maximizes the concave quadratic over the probability simplex.
///
/// Pairwise (SMO-style) ascent: each step shifts mass from the support
/// coordinate with the lowest gradient to the coordinate with the highest,
/// by the exact line-search step. It stops once the largest gradient exceeds
/// the smallest support gradient by less than the tolerance, which bounds
/// the optimality gap by the same amount.
pub fn solve_simplex_qp(moments: &BasisReturnMoments) -> Result<RidgeWeights> {
    let ell = moments.m.len();
    if ell == 0 {
        return Err(Error::InvalidWeights("empty QP".into()));
    }
    if moments.s.shape() != (ell, ell) {
        return Err(Error::DimensionMismatch {
            expected: ell,
            actual: moments.s.nrows(),
        });
    }
    if moments
        .m
        .iter()
        .chain(moments.s.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("QP moments"));
    }
    if ell == 1 {
        return RidgeWeights::new(vec![1.0]);
    }

    let mut s = moments.s.clone();
    let ridge = 1e-12 * s.trace().max(0.0) / ell as f64;
    for i in 0..ell {
        s[(i, i)] += ridge;
    }
    let m = &moments.m;
    let scale = m.amax().max(s.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale;

    let mut alpha = vec![1.0 / ell as f64; ell];
    let gradient = |alpha: &[f64]| -> Vec<f64> {
        (0..ell)
            .map(|i| m[i] - (0..ell).map(|j| s[(i, j)] * alpha[j]).sum::<f64>())
            .collect()
    };
    let mut g = gradient(&alpha);

    for iter in 0..QP_MAX_ITER {
        if iter % QP_REFRESH == QP_REFRESH - 1 {
            g = gradient(&alpha);
        }
        let mut up = 0;
        for i in 1..ell {
            if g[i] > g[up] {
                up = i;
            }
        }
        let mut down = None;
        for j in 0..ell {
            if alpha[j] > 0.0 && j != up && down.is_none_or(|d: usize| g[j] < g[d]) {
                down = Some(j);
            }
        }
        let Some(down) = down else { break };
        let gap = g[up] - g[down];
        if gap <= tol {
            break;
        }
        let curvature = s[(up, up)] + s[(down, down)] - 2.0 * s[(up, down)];
        let step = if curvature > 0.0 {
            (gap / curvature).min(alpha[down])
        } else {
            alpha[down]
        };
        if step <= 0.0 {
            break;
        }
        alpha[up] += step;
        if step == alpha[down] {
            alpha[down] = 0.0;
        } else {
            alpha[down] -= step;
        }
        for (k, gk) in g.iter_mut().enumerate() {
            *gk -= step * (s[(k, up)] - s[(k, down)]);
        }
    }

    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
    RidgeWeights::new(alpha)
}

/// Eigen system of the (filtered) calibration covariance together with the
/// calibration means and the chosen ridge mixture.
#[derive(Debug, Clone)]
pub struct UpsaFit {
    pub eigen: EigenSystem,
    pub mean: Vector,
    pub grid: PenaltyGrid,
    pub weights: RidgeWeights,
}

impl UpsaFit {
    /// Decomposes the (filtered) covariance of `x_cal` and attaches `weights`.
    pub fn from_window(
        x_cal: &Matrix,
        grid: &PenaltyGrid,
        prefilter: Option<&AoPrefilter>,
        weights: RidgeWeights,
    ) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: weights.len(),
            });
        }
        let (eigen, mean) = filtered_moments(x_cal, prefilter)?;
        Ok(Self {
            eigen,
            mean,
            grid: grid.clone(),
            weights,
        })
    }

    /// Shrunk precision spectrum `f(lambda | z, alpha)`.
    pub fn precision_spectrum(&self, alpha: &RidgeWeights) -> Result<Vector> {
        shrink_eigenvalues(&self.eigen.eigenvalues, &self.grid, alpha)
    }

    /// Filtered covariance `V diag(1 / f(lambda)) V^T` for any mixture.
    pub fn covariance_for(&self, alpha: &RidgeWeights) -> Result<Matrix> {
        let f = self.precision_spectrum(alpha)?;
        Ok(self.eigen.reconstruct_with(&f.map(|x| 1.0 / x)))
    }

    /// Unnormalized max-Sharpe direction `V diag(f(lambda)) V^T mu`.
    pub fn direction_for(&self, alpha: &RidgeWeights) -> Result<Vector> {
        let f = self.precision_spectrum(alpha)?;
        Ok(self.eigen.apply(&f, &self.mean))
    }

    pub fn covariance(&self) -> Result<Matrix> {
        self.covariance_for(&self.weights)
    }
}

/// Cross-validates the ridge mixture on `x_cal` and returns the fit.
pub fn fit_upsa(
    x_cal: &Matrix,
    grid: &PenaltyGrid,
    prefilter: Option<&AoPrefilter>,
    scaling: BasisScaling,
) -> Result<UpsaFit> {
    let moments = loo_basis_returns_with(x_cal, grid, prefilter, scaling)?;
    let weights = solve_simplex_qp(&moments)?;
    UpsaFit::from_window(x_cal, grid, prefilter, weights)
}

/// UPSA-filtered covariance and the ridge weights that produced it.
pub fn upsa_covariance(
    x_cal: &Matrix,
    grid: &PenaltyGrid,
    prefilter: Option<&AoPrefilter>,
) -> Result<(Matrix, RidgeWeights)> {
    let fit = fit_upsa(x_cal, grid, prefilter, BasisScaling::default())?;
    Ok((fit.covariance()?, fit.weights))
}

/// Dated ridge weights in rebalance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightHistory {
    entries: Vec<(YearMonth, RidgeWeights)>,
}

impl WeightHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, date: YearMonth, weights: RidgeWeights) -> Result<()> {
        if let Some((last, w)) = self.entries.last() {
            if date <= *last {
                return Err(Error::UnorderedHistory {
                    prev: *last,
                    next: date,
                });
            }
            if w.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    actual: weights.len(),
                });
            }
        }
        self.entries.push((date, weights));
        Ok(())
    }

    pub fn entries(&self) -> &[(YearMonth, RidgeWeights)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Expanding-window means: entry `k` averages entries `0..=k`.
    pub fn running_means(&self) -> Vec<RidgeWeights> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut acc: Vec<f64> = Vec::new();
        for (k, (_, w)) in self.entries.iter().enumerate() {
            accumulate_mean(&mut acc, w.as_slice(), k + 1);
            out.push(simplex_from(&acc));
        }
        out
    }

    /// L1 changes between consecutive weight vectors.
    pub fn turnovers(&self) -> Vec<f64> {
        self.entries
            .windows(2)
            .map(|w| w[1].1.turnover(&w[0].1))
            .collect()
    }
}

fn accumulate_mean(acc: &mut Vec<f64>, x: &[f64], count: usize) {
    if acc.is_empty() {
        acc.extend_from_slice(x);
        return;
    }
    let k = count as f64;
    for (a, v) in acc.iter_mut().zip(x) {
        *a += (v - *a) / k;
    }
}

fn simplex_from(acc: &[f64]) -> RidgeWeights {
    RidgeWeights::new(acc.iter().map(|a| a.max(0.0)).collect())
        .expect("mean of simplex points is on the simplex")
}

/// Expanding-window average of all weights dated up to and including `upto`.
pub fn average_weights(history: &WeightHistory, upto: YearMonth) -> Result<RidgeWeights> {
    let mut acc = Vec::new();
    let mut count = 0;
    for (_, w) in history.entries.iter().take_while(|(d, _)| *d <= upto) {
        count += 1;
        accumulate_mean(&mut acc, w.as_slice(), count);
    }
    if count == 0 {
        return Err(Error::EmptyHistory);
    }
    Ok(simplex_from(&acc))
}
