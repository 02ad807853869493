//! Simulation checks of the Average Oracle on synthetic panels.

use upsa_core::oracle::oracle_records;
use upsa_core::{
    ao_eigenvalues, ao_filter, corr_to_cov, cov_to_corr, generate_synthetic_panel, sample_moments,
    slice, IndexRange, OracleHistory, OracleRecord, ReturnsPanel, Vector,
};

const T_IS: usize = 60;
const T_OOS: usize = 6;

fn history_before(
    records: &[OracleRecord],
    row: usize,
    panel: &ReturnsPanel,
    hl: f64,
) -> OracleHistory {
    let asof = panel.dates()[row];
    let past = records.iter().filter(|r| r.date < asof).cloned().collect();
    OracleHistory::from_records(past, hl).unwrap()
}

/// Mean Frobenius distance to the realized test covariance, per rebalance:
/// (AO-filtered, raw sample).
fn forecast_errors(seed: u64) -> (f64, f64) {
    let panel = generate_synthetic_panel(30, 300, 0.05, seed).unwrap();
    let records = oracle_records(&panel, T_IS, T_OOS).unwrap();
    let (mut ao_err, mut raw_err, mut count) = (0.0, 0.0, 0);
    // first OOS row with at least one completed record behind it
    for first_oos in (T_IS + T_OOS..=panel.len() - T_OOS).step_by(3) {
        let cal = slice(&panel, IndexRange::new(first_oos - T_IS, first_oos)).unwrap();
        let test = slice(&panel, IndexRange::new(first_oos, first_oos + T_OOS)).unwrap();
        let cov = sample_moments(&cal).unwrap().cov;
        let realized = sample_moments(&test).unwrap().cov;
        let (corr, vols) = cov_to_corr(&cov).unwrap();
        let history = history_before(&records, first_oos, &panel, 24.0);
        let lam = ao_eigenvalues(&history, panel.dates()[first_oos]).unwrap();
        let filtered = corr_to_cov(&ao_filter(&corr, &lam, true).unwrap(), &vols).unwrap();
        ao_err += (&filtered - &realized).norm();
        raw_err += (&cov - &realized).norm();
        count += 1;
    }
    (ao_err / count as f64, raw_err / count as f64)
}

#[test]
fn ao_filtered_covariance_forecasts_better_than_sample_under_drift() {
    let seeds = 20;
    let (mut ao, mut raw, mut wins) = (0.0, 0.0, 0);
    for seed in 0..seeds {
        let (a, r) = forecast_errors(seed);
        ao += a / seeds as f64;
        raw += r / seeds as f64;
        wins += usize::from(a < r);
    }
    assert!(ao < raw, "AO error {ao:.3e} vs sample {raw:.3e}");
    assert!(
        wins > seeds as usize / 2,
        "AO better in {wins}/{seeds} seeds"
    );
}

#[test]
fn ao_settles_as_stationary_history_grows() {
    let panel = generate_synthetic_panel(10, 400, 0.0, 3).unwrap();
    let records = oracle_records(&panel, T_IS, T_OOS).unwrap();
    // near-flat weights: the AO is close to the plain rank-wise mean
    let hl = 1e6;
    let n = panel.n_assets();
    let target = records
        .iter()
        .fold(Vector::zeros(n), |acc, r| acc + &r.lam_oracle)
        / records.len() as f64;
    let mut steps = Vec::new();
    let mut gaps = Vec::new();
    let mut prev: Option<Vector> = None;
    for row in T_IS + T_OOS + 1..panel.len() {
        let h = history_before(&records, row, &panel, hl);
        let lam = ao_eigenvalues(&h, panel.dates()[row]).unwrap();
        if let Some(p) = &prev {
            steps.push((&lam - p).norm());
        }
        gaps.push((&lam - &target).norm());
        prev = Some(lam);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let half = steps.len() / 2;
    assert!(
        mean(&steps[half..]) < 0.5 * mean(&steps[..half]),
        "successive AO changes {:.3e} then {:.3e}",
        mean(&steps[..half]),
        mean(&steps[half..])
    );
    let g = gaps.len();
    assert!(mean(&gaps[g - 20..]) < mean(&gaps[..20]));
}

#[test]
fn oracle_records_are_append_only() {
    let panel = generate_synthetic_panel(6, 150, 0.02, 8).unwrap();
    let full = oracle_records(&panel, 36, 6).unwrap();
    let short = oracle_records(&panel.truncate(100).unwrap(), 36, 6).unwrap();
    assert_eq!(short.len(), 100 - 36 - 6 + 1);
    for (a, b) in short.iter().zip(&full) {
        assert_eq!(a, b);
    }
}
