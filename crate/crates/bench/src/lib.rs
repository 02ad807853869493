//! Deterministic fixtures for the benchmarks.

use upsa_core::{generate_synthetic_panel, sample_moments, Matrix, ReturnsPanel};

/// Synthetic panel with a little drift.
pub fn panel(n: usize, months: usize, seed: u64) -> ReturnsPanel {
    generate_synthetic_panel(n, months.max(24), 0.02, seed).expect("valid fixture size")
}

/// First `t` months of a synthetic panel, time-major.
pub fn window(n: usize, t: usize, seed: u64) -> Matrix {
    panel(n, t, seed).returns().rows(0, t).into_owned()
}

/// Sample covariance of a `2n`-month window; full rank.
pub fn covariance(n: usize, seed: u64) -> Matrix {
    sample_moments(&window(n, 2 * n, seed))
        .expect("finite fixture")
        .cov
}

/// Pseudo-random differences in `[-1, 1)` from a fixed LCG.
pub fn differences(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        assert_eq!(window(5, 40, 0).shape(), (40, 5));
        assert_eq!(covariance(6, 1).shape(), (6, 6));
        let d = differences(100, 3);
        assert!(d.iter().all(|v| (-1.0..1.0).contains(v)));
        assert_eq!(d, differences(100, 3));
    }
}
