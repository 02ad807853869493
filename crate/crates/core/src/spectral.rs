//! Sample moments, correlation/volatility split and symmetric
//! eigendecomposition.
//!
//! Covariances use the biased `1/dt` normalization. Eigen systems are sorted
//! by descending eigenvalue and each eigenvector is signed so that its
//! largest-magnitude entry is positive, which keeps decompositions
//! reproducible across runs.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Mean, covariance and volatilities of a time-major return sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub mean: Vector,
    pub cov: Matrix,
    pub vols: Vector,
    pub dt: usize,
}

/// Computes `mean` and `cov = (1/dt) (X - mean)^T (X - mean)` for a
/// `dt x n` matrix `x`.
pub fn sample_moments(x: &Matrix) -> Result<SampleMoments> {
    let (dt, n) = x.shape();
    if dt < 2 || n == 0 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: dt,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("return sample"));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.tr_mul(&centered) / dt as f64;
    symmetrize(&mut cov);
    let vols = cov.diagonal().map(|v| v.max(0.0).sqrt());
    Ok(SampleMoments {
        mean,
        cov,
        vols,
        dt,
    })
}

/// Splits a covariance into a unit-diagonal correlation and volatilities.
pub fn cov_to_corr(cov: &Matrix) -> Result<(Matrix, Vector)> {
    check_square(cov)?;
    let n = cov.nrows();
    let mut vols = Vector::zeros(n);
    for i in 0..n {
        let d = cov[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::ZeroVariance { asset: i });
        }
        vols[i] = d.sqrt();
    }
    let mut corr = Matrix::from_fn(n, n, |i, j| cov[(i, j)] / (vols[i] * vols[j]));
    for i in 0..n {
        corr[(i, i)] = 1.0;
    }
    symmetrize(&mut corr);
    Ok((corr, vols))
}

/// Rescales a correlation matrix by volatilities: `cov_ij = corr_ij v_i v_j`.
pub fn corr_to_cov(corr: &Matrix, vols: &Vector) -> Result<Matrix> {
    check_square(corr)?;
    if vols.len() != corr.nrows() {
        return Err(Error::DimensionMismatch {
            expected: corr.nrows(),
            actual: vols.len(),
        });
    }
    if let Some(asset) = vols.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeVolatility { asset });
    }
    let n = corr.nrows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        corr[(i, j)] * vols[i] * vols[j]
    }))
}

/// Eigenvalues (descending) and matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(spectrum) V^T`.
    pub fn reconstruct_with(&self, spectrum: &Vector) -> Matrix {
        reconstruct(&self.eigenvectors, spectrum)
    }

    /// `V diag(spectrum) V^T x` without forming the matrix.
    pub fn apply(&self, spectrum: &Vector, x: &Vector) -> Vector {
        let coords = self.eigenvectors.tr_mul(x);
        &self.eigenvectors * coords.component_mul(spectrum)
    }
}

/// Symmetric eigendecomposition, sorted descending with the deterministic
/// sign convention.
pub fn eig_sym(m: &Matrix) -> Result<EigenSystem> {
    check_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let scale = m.amax();
    let asym = max_asymmetry(m);
    if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let lead = col.iamax();
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.set_column(dst, &(col * sign));
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// [`eig_sym`] for positive semi-definite inputs: round-off negatives are
/// clamped to zero, genuinely negative eigenvalues are an error.
pub fn eig_psd(m: &Matrix) -> Result<EigenSystem> {
    let mut es = eig_sym(m)?;
    let top = es.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let tol = 1e-10 * top.max(1.0);
    for v in es.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(Error::NegativeEigenvalue(*v));
            }
            *v = 0.0;
        }
    }
    Ok(es)
}

/// `V diag(lam) V^T`, exactly symmetric.
pub fn reconstruct(v: &Matrix, lam: &Vector) -> Matrix {
    debug_assert_eq!(v.ncols(), lam.len());
    let mut scaled = v.clone();
    for (mut col, &l) in scaled.column_iter_mut().zip(lam.iter()) {
        col *= l;
    }
    let mut out = scaled * v.transpose();
    symmetrize(&mut out);
    out
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    Ok(())
}

fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(m: &Matrix) -> f64 {
        m.norm()
    }

    fn mat(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    #[test]
    fn identical_rows_have_zero_covariance() {
        let x = mat(2, 3, &[0.1, -0.2, 0.3, 0.1, -0.2, 0.3]);
        let m = sample_moments(&x).unwrap();
        assert_eq!(m.cov, Matrix::zeros(3, 3));
        assert_eq!(m.mean.as_slice(), &[0.1, -0.2, 0.3]);
    }

    #[test]
    fn two_by_two_hand_case() {
        let m = sample_moments(&mat(2, 2, &[1.0, 0.0, -1.0, 0.0])).unwrap();
        assert_eq!(m.mean.as_slice(), &[0.0, 0.0]);
        assert_eq!(m.cov, mat(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(m.vols.as_slice(), &[1.0, 0.0]);
        assert_eq!(m.dt, 2);
    }

    #[test]
    fn single_row_is_degenerate() {
        assert!(matches!(
            sample_moments(&mat(1, 2, &[1.0, 2.0])),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn corr_split_cases() {
        let (c, v) = cov_to_corr(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(c, Matrix::identity(3, 3));
        assert_eq!(v.as_slice(), &[1.0, 1.0, 1.0]);

        let (c, v) = cov_to_corr(&mat(2, 2, &[4.0, 2.0, 2.0, 1.0])).unwrap();
        assert_eq!(c, mat(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(v.as_slice(), &[2.0, 1.0]);

        let (c, v) = cov_to_corr(&mat(2, 2, &[9.0, 0.0, 0.0, 16.0])).unwrap();
        assert_eq!(c, Matrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[3.0, 4.0]);

        assert!(matches!(
            cov_to_corr(&mat(2, 2, &[1.0, 0.0, 0.0, 0.0])),
            Err(Error::ZeroVariance { asset: 1 })
        ));
    }

    #[test]
    fn corr_to_cov_cases() {
        let vols = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(
            corr_to_cov(&Matrix::identity(2, 2), &vols).unwrap(),
            mat(2, 2, &[9.0, 0.0, 0.0, 16.0])
        );
        let c = mat(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert_eq!(corr_to_cov(&c, &Vector::from_element(2, 1.0)).unwrap(), c);
        assert!(matches!(
            corr_to_cov(&c, &Vector::from_vec(vec![1.0, -1.0])),
            Err(Error::NegativeVolatility { asset: 1 })
        ));
    }

    #[test]
    fn eig_two_by_two_closed_form() {
        let es = eig_sym(&mat(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        assert!((es.eigenvalues[0] - 1.5).abs() < 1e-14);
        assert!((es.eigenvalues[1] - 0.5).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = es.eigenvectors.column(0);
        let v1 = es.eigenvectors.column(1);
        // up to sign
        assert!((v0[0].abs() - h).abs() < 1e-12 && (v0[0] * v0[1] - 0.5).abs() < 1e-12);
        assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] * v1[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn eig_identity() {
        let es = eig_sym(&Matrix::identity(4, 4)).unwrap();
        assert!(es.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let vtv = es.eigenvectors.tr_mul(&es.eigenvectors);
        assert!(frob(&(vtv - Matrix::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn rank_deficient_covariance() {
        // n = 5 assets, dt = 3 observations => rank <= 2
        let x = mat(
            3,
            5,
            &[
                0.1, -0.3, 0.2, 0.05, 0.7, //
                -0.4, 0.2, 0.1, 0.3, -0.1, //
                0.25, 0.15, -0.6, 0.0, 0.2,
            ],
        );
        let m = sample_moments(&x).unwrap();
        let es = eig_psd(&m.cov).unwrap();
        let small = es.eigenvalues.iter().filter(|&&l| l < 1e-10).count();
        assert_eq!(small, 3);
    }

    #[test]
    fn rejects_non_symmetric() {
        assert!(matches!(
            eig_sym(&mat(2, 2, &[1.0, 0.5, 0.4, 1.0])),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn negative_eigenvalue_rejected_by_psd_variant() {
        assert!(matches!(
            eig_psd(&mat(2, 2, &[1.0, 2.0, 2.0, 1.0])),
            Err(Error::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn reconstruct_cases() {
        let a = mat(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let es = eig_sym(&a).unwrap();
        assert!(frob(&(es.reconstruct_with(&es.eigenvalues) - &a)) < 1e-12);
        let ones = Vector::from_element(2, 1.0);
        assert!(frob(&(es.reconstruct_with(&ones) - Matrix::identity(2, 2))) < 1e-12);
        let two_zero = Vector::from_vec(vec![2.0, 0.0]);
        assert!(frob(&(es.reconstruct_with(&two_zero) - mat(2, 2, &[1.0, 1.0, 1.0, 1.0]))) < 1e-12);
    }

    #[test]
    fn eigenvector_signs_are_deterministic() {
        let a = mat(3, 3, &[2.0, -0.3, 0.1, -0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let es = eig_sym(&a).unwrap();
        for col in es.eigenvectors.column_iter() {
            assert!(col[col.iamax()] > 0.0);
        }
        assert_eq!(es, eig_sym(&a).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn return_sample() -> impl Strategy<Value = Matrix> {
            (2usize..12, 1usize..8).prop_flat_map(|(t, n)| {
                proptest::collection::vec(-0.2f64..0.2, t * n)
                    .prop_map(move |v| Matrix::from_row_slice(t, n, &v))
            })
        }

        proptest! {
            #[test]
            fn trace_identity(x in return_sample()) {
                let m = sample_moments(&x).unwrap();
                let mut ss = 0.0;
                for row in x.row_iter() {
                    ss += (row.transpose() - &m.mean).norm_squared();
                }
                let expected = ss / x.nrows() as f64;
                prop_assert!((m.cov.trace() - expected).abs() <= 1e-12 * expected.max(1e-300));
                for i in 0..m.vols.len() {
                    prop_assert!((m.vols[i] * m.vols[i] - m.cov[(i, i)]).abs() <= 1e-15);
                }
            }

            #[test]
            fn eig_round_trip(x in return_sample()) {
                let cov = sample_moments(&x).unwrap().cov;
                let es = eig_psd(&cov).unwrap();
                let n = cov.nrows();
                let vtv = es.eigenvectors.tr_mul(&es.eigenvectors);
                prop_assert!(frob(&(vtv - Matrix::identity(n, n))) <= 1e-8);
                let rec = es.reconstruct_with(&es.eigenvalues);
                prop_assert!(frob(&(rec - &cov)) <= 1e-9 * frob(&cov).max(1e-300));
                for w in es.eigenvalues.as_slice().windows(2) {
                    prop_assert!(w[0] >= w[1]);
                }
            }

            #[test]
            fn corr_round_trip(x in return_sample()) {
                let mut cov = sample_moments(&x).unwrap().cov;
                for i in 0..cov.nrows() {
                    cov[(i, i)] += 1e-4;
                }
                let (c, v) = cov_to_corr(&cov).unwrap();
                let back = corr_to_cov(&c, &v).unwrap();
                prop_assert!(frob(&(back - &cov)) <= 1e-12 * frob(&cov));
            }
        }
    }
}
