//! Ridge penalty grids and the resolvent-mixture shrinkage function
//! `f(lambda) = sum_i alpha_i / (z_i + lambda)`.
//!
//! `f` maps a covariance eigenvalue to a precision-scale value: the filtered
//! precision is `V diag(f(lambda)) V^T` and the filtered covariance is
//! `V diag(1 / f(lambda)) V^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vector;

/// Strictly positive, strictly increasing ridge penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyGrid {
    z: Vec<f64>,
}

impl PenaltyGrid {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidGrid(
                "penalties must be finite and positive".into(),
            ));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "penalties must be strictly increasing".into(),
            ));
        }
        Ok(Self { z })
    }

    pub fn penalties(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// A point of the probability simplex over grid penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeWeights {
    alpha: Vec<f64>,
}

impl RidgeWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if alpha.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { alpha })
    }

    /// Basis vector `e_i` of length `len`.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut alpha = vec![0.0; len];
        alpha[i] = 1.0;
        Self { alpha }
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            alpha: vec![1.0 / len as f64; len],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// L1 distance to another weight vector.
    pub fn turnover(&self, other: &RidgeWeights) -> f64 {
        self.alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Geometric grid from `lo` to `hi` inclusive; `count <= 1` gives `{lo}`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<PenaltyGrid> {
    if !(lo > 0.0) || !(hi > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "bounds must be positive (got {lo}, {hi})"
        )));
    }
    if count <= 1 {
        return PenaltyGrid::new(vec![lo]);
    }
    if lo >= hi {
        return Err(Error::InvalidGrid(format!("need lo < hi (got {lo}, {hi})")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = (count - 1) as f64;
    let mut z: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / last).exp())
        .collect();
    z[0] = lo;
    z[count - 1] = hi;
    PenaltyGrid::new(z)
}

/// Applies `f(lambda) = sum_i alpha_i / (z_i + lambda)` to every eigenvalue.
pub fn shrink_eigenvalues(
    lam: &Vector,
    grid: &PenaltyGrid,
    alpha: &RidgeWeights,
) -> Result<Vector> {
    if grid.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            actual: alpha.len(),
        });
    }
    if lam.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::NegativeEigenvalue(lam.min()));
    }
    Ok(lam.map(|l| {
        grid.z
            .iter()
            .zip(&alpha.alpha)
            .map(|(z, a)| a / (z + l))
            .sum()
    }))
}

/// Herfindahl index `1 / sum alpha_i^2`.
pub fn herfindahl(alpha: &RidgeWeights) -> f64 {
    1.0 / alpha.alpha.iter().map(|a| a * a).sum::<f64>()
}
