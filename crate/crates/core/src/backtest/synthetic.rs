//! Gaussian return panels with a slowly rotating population covariance.
//!
//! The population covariance at month `t` is `Q_t diag(lambda_t) Q_t^T`.
//! `Q_0` is a random orthogonal matrix with a market-like first column and `Q_{t+1} = R_t Q_t`, with `R_t` a
//! Cayley rotation whose largest plane angle is about `drift` radians. When
//! `drift > 0` each month's spectrum is also jittered by up to 5% around the
//! base spectrum. The mean vector is fixed.
//!
//! Three independent random streams drive the structure, the shocks and the
//! drift path, so panels with the same seed differ only through the drift.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ReturnsPanel, YearMonth};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

const MONTHLY_VOL: f64 = 0.03;
const TOP_SHARE: f64 = 0.25;
const JITTER: f64 = 0.05;
const MARKET_DISPERSION: f64 = 0.3;
const MARKET_MARGIN: f64 = 1.2;
/// Annualized Sharpe ratio of the population tangency portfolio.
const TARGET_SHARPE: f64 = 1.0;

const STRUCTURE: u64 = 0;
const SHOCKS: u64 = 1;
const DRIFT: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthogonal basis whose first column is a market-like direction with
/// strictly positive loadings.
fn market_basis(rng: &mut impl Rng, n: usize) -> Matrix {
    let mut seed = gaussian(rng, n, n);
    for i in 0..n {
        seed[(i, 0)] = 1.0 + MARKET_DISPERSION * (2.0 * rng.random::<f64>() - 1.0);
    }
    let qr = QR::new(seed);
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Base spectrum: a dominant factor holding a quarter of the variance and a
/// `1/k` tail, scaled to an average monthly volatility of 3%.
fn base_spectrum(n: usize) -> Vector {
    let trace = n as f64 * MONTHLY_VOL * MONTHLY_VOL;
    let tail: Vec<f64> = (1..n).map(|k| 1.0 / k as f64).collect();
    let tail_sum: f64 = tail.iter().sum();
    Vector::from_iterator(
        n,
        std::iter::once(TOP_SHARE * trace).chain(
            tail.iter()
                .map(|w| (1.0 - TOP_SHARE) * trace * w / tail_sum),
        ),
    )
}

/// Population mean, initial eigenbasis and base spectrum for a seed.
///
/// In eigen-coordinates the mean is `c_k = g_k lambda_k` with `g_k` drawn
/// from `[0.5, 1.5)`, so Sharpe contributions `c_k^2 / lambda_k` grow with
/// the eigenvalue. The market coordinate is raised if needed to keep every
/// asset's mean positive, then the vector is scaled to the target Sharpe.
pub(crate) fn synthetic_model(n: usize, seed: u64) -> (Vector, Matrix, Vector) {
    let mut rng = stream(seed, STRUCTURE);
    let q0 = market_basis(&mut rng, n);
    let lam = base_spectrum(n);
    let mut c = Vector::from_fn(n, |k, _| (0.5 + rng.random::<f64>()) * lam[k]);
    let rest = &q0 * &c - q0.column(0) * c[0];
    let floor = (0..n)
        .map(|i| -rest[i] / q0[(i, 0)])
        .fold(0.0_f64, f64::max);
    c[0] = c[0].max(MARKET_MARGIN * floor);
    let raw = &q0 * &c;
    let quad: f64 = c.iter().zip(lam.iter()).map(|(c, l)| c * c / l).sum();
    let mu = raw * (TARGET_SHARPE / (12.0 * quad).sqrt());
    (mu, q0, lam)
}

/// Cayley transform of a random skew-symmetric matrix with plane angles of
/// order `angle`.
fn small_rotation(rng: &mut impl Rng, n: usize, angle: f64) -> Matrix {
    let g = gaussian(rng, n, n);
    let k = &g - g.transpose();
    let a = &k * (angle * std::f64::consts::SQRT_2 / k.norm().max(f64::MIN_POSITIVE));
    let eye = Matrix::identity(n, n);
    let lhs = &eye - &a * 0.5;
    let rhs = &eye + &a * 0.5;
    lhs.lu()
        .solve(&rhs)
        .expect("I - A/2 is invertible for skew-symmetric A")
}

/// Monthly panel of `t_total` rows and `n` assets starting in 1970-01.
pub fn generate_synthetic_panel(
    n: usize,
    t_total: usize,
    drift: f64,
    seed: u64,
) -> Result<ReturnsPanel> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "synthetic panel needs n >= 2, got {n}"
        )));
    }
    if t_total < 24 {
        return Err(Error::InvalidConfig(format!(
            "synthetic panel needs at least 24 months, got {t_total}"
        )));
    }
    if !(drift >= 0.0) || !drift.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "drift must be finite and non-negative, got {drift}"
        )));
    }
    let (mu, mut q, base) = synthetic_model(n, seed);
    let mut shocks = stream(seed, SHOCKS);
    let mut path = stream(seed, DRIFT);

    let mut returns = Matrix::zeros(t_total, n);
    for t in 0..t_total {
        let lam = if drift > 0.0 {
            base.map(|l| l * (1.0 + JITTER * (2.0 * path.random::<f64>() - 1.0)))
        } else {
            base.clone()
        };
        let eps = Vector::from_fn(n, |i, _| {
            let z: f64 = StandardNormal.sample(&mut shocks);
            lam[i].sqrt() * z
        });
        let r = &mu + &q * eps;
        for (j, v) in r.iter().enumerate() {
            returns[(t, j)] = v.max(-0.99);
        }
        if drift > 0.0 {
            q = small_rotation(&mut path, n, drift) * q;
        }
    }

    let start = YearMonth::new(1970, 1).expect("valid start month");
    let dates = (0..t_total).map(|k| start.add_months(k as i64)).collect();
    let width = n.to_string().len().max(3);
    let ids = (1..=n).map(|k| format!("A{k:0width$}")).collect();
    ReturnsPanel::new(dates, ids, returns)
}
