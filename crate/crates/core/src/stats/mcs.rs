//! Model Confidence Set with the range statistic and a circular block
//! bootstrap.
//!
//! Bootstrap means are drawn once and reused across elimination rounds. The
//! elimination sequence runs until a single model remains; MCS p-values are
//! the running maximum of the round p-values, so the set at any size `alpha`
//! is `{ i : p_i >= alpha }` and shrinks monotonically as `alpha` grows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

const MIN_DATES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub alpha: f64,
    pub block_len: usize,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            block_len: 12,
            n_boot: 5000,
            seed: 0,
        }
    }
}

/// One elimination round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub model: String,
    /// MCS p-value (running maximum over rounds).
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub alpha: f64,
    /// Every model in elimination order; the last entry has p-value 1.
    pub elimination_order: Vec<McsStep>,
    pub survivors: Vec<String>,
}

impl McsResult {
    pub fn p_value(&self, model: &str) -> Option<f64> {
        self.elimination_order
            .iter()
            .find(|s| s.model == model)
            .map(|s| s.p_value)
    }

    /// 1-based round at which `model` leaves the set at this result's size,
    /// `None` for survivors.
    pub fn eliminated_at(&self, model: &str) -> Option<usize> {
        self.elimination_order
            .iter()
            .position(|s| s.model == model)
            .filter(|&k| self.elimination_order[k].p_value < self.alpha)
            .map(|k| k + 1)
    }

    pub fn is_survivor(&self, model: &str) -> bool {
        self.survivors.iter().any(|s| s == model)
    }

    /// Survivor set at another size, reusing the same p-values.
    pub fn survivors_at(&self, alpha: f64) -> Vec<String> {
        self.elimination_order
            .iter()
            .filter(|s| s.p_value >= alpha)
            .map(|s| s.model.clone())
            .collect()
    }
}

fn block_bootstrap_means(losses: &Matrix, block_len: usize, seed: u64, replica: u64) -> Vec<f64> {
    let (t, m) = losses.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    let mut sums = vec![0.0; m];
    let mut drawn = 0;
    while drawn < t {
        let start = rng.random_range(0..t);
        for k in 0..block_len.min(t - drawn) {
            let row = (start + k) % t;
            for (j, s) in sums.iter_mut().enumerate() {
                *s += losses[(row, j)];
            }
        }
        drawn += block_len.min(t - drawn);
    }
    sums.into_iter().map(|s| s / t as f64).collect()
}

/// `losses` is `dates x models`; lower loss is better.
pub fn model_confidence_set(
    losses: &Matrix,
    names: &[String],
    config: &McsConfig,
) -> Result<McsResult> {
    let (t, m) = losses.shape();
    if m < 2 {
        return Err(Error::InvalidMcsInput("at least two models".into()));
    }
    if names.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: names.len(),
        });
    }
    if t < MIN_DATES {
        return Err(Error::InvalidMcsInput(format!(
            "at least {MIN_DATES} dates, got {t}"
        )));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidMcsInput(format!(
            "alpha in (0, 1), got {}",
            config.alpha
        )));
    }
    if config.block_len == 0 || config.n_boot == 0 {
        return Err(Error::InvalidMcsInput(
            "positive block length and replica count".into(),
        ));
    }
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MCS losses"));
    }

    let means: Vec<f64> = (0..m).map(|j| losses.column(j).mean()).collect();
    let boot: Vec<Vec<f64>> = (0..config.n_boot as u64)
        .into_par_iter()
        .map(|b| block_bootstrap_means(losses, config.block_len, config.seed, b))
        .collect();

    // variance of each bootstrapped mean differential
    let mut var = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = means[i] - means[j];
            let v = boot
                .iter()
                .map(|bm| (bm[i] - bm[j] - d).powi(2))
                .sum::<f64>()
                / config.n_boot as f64;
            var[i][j] = v;
            var[j][i] = v;
        }
    }
    // differentials that are identically zero carry no information
    let scale = losses.amax().max(f64::MIN_POSITIVE);
    let negligible = |i: usize, j: usize| var[i][j] <= (1e-15 * scale).powi(2);

    let mut alive: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    let mut running_p = 0.0_f64;
    while alive.len() > 1 {
        let mut t_stat = 0.0_f64;
        let mut worst = None;
        let mut worst_t = f64::NEG_INFINITY;
        let mut informative = false;
        for &i in &alive {
            let mut row_max = f64::NEG_INFINITY;
            for &j in &alive {
                if i == j {
                    continue;
                }
                let d = means[i] - means[j];
                let tij = if negligible(i, j) {
                    if d.abs() <= 1e-15 * scale {
                        0.0
                    } else {
                        d.signum() * f64::INFINITY
                    }
                } else {
                    informative = true;
                    d / var[i][j].sqrt()
                };
                row_max = row_max.max(tij);
                t_stat = t_stat.max(tij.abs());
            }
            if row_max > worst_t {
                worst_t = row_max;
                worst = Some(i);
            }
        }
        if !informative && t_stat == 0.0 {
            break;
        }
        let exceed = boot
            .iter()
            .filter(|bm| {
                let mut tb = 0.0_f64;
                for (a, &i) in alive.iter().enumerate() {
                    for &j in &alive[a + 1..] {
                        if negligible(i, j) {
                            continue;
                        }
                        let d = means[i] - means[j];
                        tb = tb.max(((bm[i] - bm[j]) - d).abs() / var[i][j].sqrt());
                    }
                }
                tb >= t_stat
            })
            .count();
        let p = exceed as f64 / config.n_boot as f64;
        running_p = running_p.max(p);
        let out = worst.expect("at least two models alive");
        order.push(McsStep {
            model: names[out].clone(),
            p_value: running_p,
        });
        alive.retain(|&k| k != out);
    }
    for &k in &alive {
        order.push(McsStep {
            model: names[k].clone(),
            p_value: 1.0,
        });
    }

    let survivors = order
        .iter()
        .filter(|s| s.p_value >= config.alpha)
        .map(|s| s.model.clone())
        .collect();
    Ok(McsResult {
        alpha: config.alpha,
        elimination_order: order,
        survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    fn noisy_losses(t: usize, offsets: &[f64], noise: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(t, offsets.len(), |_, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            offsets[j] + noise * z
        })
    }

    fn cfg(alpha: f64) -> McsConfig {
        McsConfig {
            alpha,
            block_len: 6,
            n_boot: 1000,
            seed: 17,
        }
    }

    #[test]
    fn identical_columns_all_survive() {
        let base = noisy_losses(60, &[0.0], 1.0, 1);
        let losses = Matrix::from_fn(60, 2, |r, _| base[(r, 0)]);
        let res = model_confidence_set(&losses, &names(2), &cfg(0.05)).unwrap();
        assert_eq!(res.survivors.len(), 2);
        assert!(res.elimination_order.iter().all(|s| s.p_value == 1.0));
    }

    #[test]
    fn clearly_worse_model_is_eliminated() {
        let losses = noisy_losses(80, &[0.0, 0.0, 5.0], 0.1, 3);
        let res = model_confidence_set(&losses, &names(3), &cfg(0.05)).unwrap();
        assert_eq!(res.elimination_order[0].model, "m2");
        assert!(!res.is_survivor("m2"));
        assert!(res.is_survivor("m0") && res.is_survivor("m1"));
        assert_eq!(res.eliminated_at("m2"), Some(1));
        assert_eq!(res.eliminated_at("m0"), None);
    }

    #[test]
    fn deterministic_under_seed() {
        let losses = noisy_losses(50, &[0.0, 0.1, 0.3, 0.05], 1.0, 9);
        let a = model_confidence_set(&losses, &names(4), &cfg(0.1)).unwrap();
        let b = model_confidence_set(&losses, &names(4), &cfg(0.1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn survivor_sets_nest_across_sizes() {
        for seed in 0..5 {
            let losses = noisy_losses(60, &[0.0, 0.2, 0.4, 0.6], 1.0, seed);
            let tight = model_confidence_set(&losses, &names(4), &cfg(0.01)).unwrap();
            let loose = model_confidence_set(&losses, &names(4), &cfg(0.10)).unwrap();
            for s in &loose.survivors {
                assert!(tight.survivors.contains(s));
            }
            assert!(!loose.survivors.is_empty());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let losses = noisy_losses(20, &[0.0, 1.0], 1.0, 0);
        assert!(model_confidence_set(&losses, &names(2), &cfg(0.05)).is_err());
        let losses = noisy_losses(40, &[0.0], 1.0, 0);
        assert!(model_confidence_set(&losses, &names(1), &cfg(0.05)).is_err());
        let losses = noisy_losses(40, &[0.0, 1.0], 1.0, 0);
        assert!(model_confidence_set(&losses, &names(2), &cfg(1.5)).is_err());
    }
}
