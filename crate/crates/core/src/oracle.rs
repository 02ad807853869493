//! Average Oracle (AO) correlation filtering.
//!
//! For each past calibration/test pair the oracle eigenvalues are the
//! diagonal of the test correlation expressed in the calibration eigenbasis.
//! The AO spectrum is their rank-wise exponentially weighted average over
//! records that end strictly before the query date, and the AO filter swaps
//! a correlation matrix's eigenvalues for that spectrum.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::data::{IndexRange, ReturnsPanel, YearMonth};
use crate::error::{Error, Result};
use crate::spectral::{self, corr_to_cov, cov_to_corr, eig_sym, EigenSystem};
use crate::{Matrix, Vector};

/// Oracle eigenvalues of one calibration/test pair, dated by the last month
/// of its test window.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub date: YearMonth,
    pub lam_oracle: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleHistory {
    records: Vec<OracleRecord>,
    half_life: f64,
}

impl OracleHistory {
    pub fn new(half_life: f64) -> Result<Self> {
        if !(half_life > 0.0) || !half_life.is_finite() {
            return Err(Error::InvalidHalfLife(half_life));
        }
        Ok(Self {
            records: Vec::new(),
            half_life,
        })
    }

    pub fn from_records(records: Vec<OracleRecord>, half_life: f64) -> Result<Self> {
        let mut h = Self::new(half_life)?;
        for r in records {
            h.push(r)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, record: OracleRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.date <= last.date {
                return Err(Error::UnorderedHistory {
                    prev: last.date,
                    next: record.date,
                });
            }
            if record.lam_oracle.len() != last.lam_oracle.len() {
                return Err(Error::DimensionMismatch {
                    expected: last.lam_oracle.len(),
                    actual: record.lam_oracle.len(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[OracleRecord] {
        &self.records
    }

    pub fn half_life(&self) -> f64 {
        self.half_life
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes `date,lam_1,...,lam_n` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.records.first().map_or(0, |r| r.lam_oracle.len());
        let mut header = vec!["date".to_string()];
        header.extend((1..=n).map(|k| format!("lam_{k}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.date.to_string()];
            row.extend(r.lam_oracle.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<oracle cache>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, half_life: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut h = Self::new(half_life)?;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let date: YearMonth = rec[0].parse().map_err(|_| Error::BadDate {
                row,
                value: rec[0].to_string(),
            })?;
            let vals = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(col, s)| {
                    s.parse::<f64>().map_err(|_| Error::BadValue {
                        row,
                        col,
                        value: s.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            h.push(OracleRecord {
                date,
                lam_oracle: Vector::from_vec(vals),
            })?;
        }
        Ok(h)
    }
}

/// `diag(V_cal^T C_test V_cal)` with `V_cal` in descending eigenvalue order.
pub fn oracle_eigenvalues(c_cal: &Matrix, c_test: &Matrix) -> Result<Vector> {
    if c_cal.shape() != c_test.shape() {
        return Err(Error::DimensionMismatch {
            expected: c_cal.nrows(),
            actual: c_test.nrows(),
        });
    }
    let es = eig_sym(c_cal)?;
    Ok(oracle_in_basis(&es, c_test))
}

fn oracle_in_basis(es: &EigenSystem, c_test: &Matrix) -> Vector {
    let v = &es.eigenvectors;
    let cv = c_test * v;
    Vector::from_iterator(
        v.ncols(),
        v.column_iter()
            .zip(cv.column_iter())
            .map(|(a, b)| a.dot(&b).max(0.0)),
    )
}

/// Weight of a record `age` months old: `2^(-age / half_life)`.
pub fn ewma_weight(age_months: f64, half_life: f64) -> f64 {
    (-age_months / half_life).exp2()
}

/// Rank-wise EWMA of all oracle records dated strictly before `asof`.
pub fn ao_eigenvalues(history: &OracleHistory, asof: YearMonth) -> Result<Vector> {
    let past: Vec<&OracleRecord> = history.records.iter().filter(|r| r.date < asof).collect();
    let Some(first) = past.first() else {
        return Err(Error::NoHistory(asof));
    };
    let mut acc = Vector::zeros(first.lam_oracle.len());
    let mut total = 0.0;
    for r in &past {
        let w = ewma_weight(r.date.months_until(asof) as f64, history.half_life);
        acc.axpy(w, &r.lam_oracle, 1.0);
        total += w;
    }
    Ok(acc / total)
}

/// Replaces the eigenvalues of `corr` by `lam_ao`, optionally rescaling the
/// result back to unit diagonal.
pub fn ao_filter(corr: &Matrix, lam_ao: &Vector, renormalize: bool) -> Result<Matrix> {
    ao_filter_eigen(&eig_sym(corr)?, lam_ao, renormalize)
}

/// [`ao_filter`] for a correlation matrix that is already decomposed.
pub fn ao_filter_eigen(es: &EigenSystem, lam_ao: &Vector, renormalize: bool) -> Result<Matrix> {
    if lam_ao.len() != es.dim() {
        return Err(Error::DimensionMismatch {
            expected: es.dim(),
            actual: lam_ao.len(),
        });
    }
    let mut m = es.reconstruct_with(lam_ao);
    if renormalize {
        let n = m.nrows();
        let d = m.diagonal();
        if let Some(asset) = d.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::ZeroVariance { asset });
        }
        let s = d.map(|x| 1.0 / x.sqrt());
        m = Matrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        spectral::symmetrize(&mut m);
    }
    Ok(m)
}

/// AO spectrum plus the diagonal-renormalization flag, applied to
/// covariances through their correlation/volatility split.
#[derive(Debug, Clone, PartialEq)]
pub struct AoPrefilter {
    pub lam_ao: Vector,
    pub renormalize: bool,
}

impl AoPrefilter {
    /// Filters the correlation of `cov` and rescales by its volatilities.
    pub fn apply(&self, cov: &Matrix) -> Result<Matrix> {
        let (corr, vols) = cov_to_corr(cov)?;
        let filtered = ao_filter(&corr, &self.lam_ao, self.renormalize)?;
        corr_to_cov(&filtered, &vols)
    }
}

fn window_corr(panel: &ReturnsPanel, range: IndexRange) -> Result<Matrix> {
    let x = crate::data::slice(panel, range)?;
    let m = spectral::sample_moments(&x)?;
    Ok(cov_to_corr(&m.cov)?.0)
}

/// Oracle record of the pair whose calibration window starts at `start`.
fn oracle_record(
    panel: &ReturnsPanel,
    start: usize,
    t_is: usize,
    t_oos: usize,
) -> Result<OracleRecord> {
    let cal = IndexRange::new(start, start + t_is);
    let test = IndexRange::new(start + t_is, start + t_is + t_oos);
    let date = panel.dates()[test.end - 1];
    let c_cal = window_corr(panel, cal).map_err(|e| e.at(date))?;
    let c_test = window_corr(panel, test).map_err(|e| e.at(date))?;
    let lam_oracle = oracle_eigenvalues(&c_cal, &c_test).map_err(|e| e.at(date))?;
    Ok(OracleRecord { date, lam_oracle })
}

/// Every oracle record the panel supports, stepping one month at a time.
/// Record `b` only reads rows up to and including its own date.
pub fn oracle_records(
    panel: &ReturnsPanel,
    t_is: usize,
    t_oos: usize,
) -> Result<Vec<OracleRecord>> {
    if t_is < 2 || t_oos < 2 {
        return Err(Error::InvalidConfig(format!(
            "oracle windows need t_is >= 2 and t_oos >= 2 (got {t_is}, {t_oos})"
        )));
    }
    if t_is + t_oos > panel.len() {
        return Ok(Vec::new());
    }
    (0..=panel.len() - t_is - t_oos)
        .into_par_iter()
        .map(|start| oracle_record(panel, start, t_is, t_oos))
        .collect()
}

/// Oracle history of all pairs whose test window ends strictly before `asof`.
pub fn build_oracle_history(
    panel: &ReturnsPanel,
    t_is: usize,
    t_oos: usize,
    asof: YearMonth,
    half_life: f64,
) -> Result<OracleHistory> {
    let mut history = OracleHistory::new(half_life)?;
    if t_is < 2 || t_oos < 2 {
        return Err(Error::InvalidConfig(format!(
            "oracle windows need t_is >= 2 and t_oos >= 2 (got {t_is}, {t_oos})"
        )));
    }
    let Some(first) = panel.dates().first() else {
        return Err(Error::NoHistory(asof));
    };
    // last usable row is the month before asof
    let usable = first.months_until(asof).clamp(0, panel.len() as i64) as usize;
    if usable < t_is + t_oos {
        return Err(Error::NoHistory(asof));
    }
    let records: Vec<OracleRecord> = (0..=usable - t_is - t_oos)
        .into_par_iter()
        .map(|start| oracle_record(panel, start, t_is, t_oos))
        .collect::<Result<_>>()?;
    for r in records {
        history.push(r)?;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn m2(a: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[1.0, a, a, 1.0])
    }

    fn random_panel(t: usize, n: usize, seed: u64) -> ReturnsPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = ym("1990-01");
        let common: Vec<f64> = (0..t).map(|_| rng.random_range(-0.05..0.05)).collect();
        ReturnsPanel::new(
            (0..t as i64).map(|i| start.add_months(i)).collect(),
            (0..n).map(|i| format!("a{i}")).collect(),
            Matrix::from_fn(t, n, |r, _| common[r] + rng.random_range(-0.03..0.03)),
        )
        .unwrap()
    }

    #[test]
    fn oracle_hand_cases() {
        let i3 = Matrix::identity(3, 3);
        let o = oracle_eigenvalues(&i3, &i3).unwrap();
        assert!(o.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let c = m2(0.3);
        let o = oracle_eigenvalues(&c, &c).unwrap();
        assert!((o[0] - 1.3).abs() < 1e-14 && (o[1] - 0.7).abs() < 1e-14);

        let o = oracle_eigenvalues(&m2(0.5), &m2(0.8)).unwrap();
        assert!((o[0] - 1.8).abs() < 1e-12);
        assert!((o[1] - 0.2).abs() < 1e-12);

        assert!(matches!(
            oracle_eigenvalues(&i3, &m2(0.1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ao_average_cases() {
        let v = Vector::from_vec(vec![1.5, 0.5]);
        let h = OracleHistory::from_records(
            vec![OracleRecord {
                date: ym("2000-01"),
                lam_oracle: v.clone(),
            }],
            24.0,
        )
        .unwrap();
        assert_eq!(ao_eigenvalues(&h, ym("2003-07")).unwrap(), v);
        assert!(matches!(
            ao_eigenvalues(&h, ym("2000-01")),
            Err(Error::NoHistory(_))
        ));

        let h = OracleHistory::from_records(
            vec![
                OracleRecord {
                    date: ym("2000-01"),
                    lam_oracle: v.clone(),
                },
                OracleRecord {
                    date: ym("2001-06"),
                    lam_oracle: v.clone(),
                },
            ],
            24.0,
        )
        .unwrap();
        let got = ao_eigenvalues(&h, ym("2002-01")).unwrap();
        assert!((got - v).amax() < 1e-15);

        // ages 25 and 1 months: weights 2^(-25/24) and 2^(-1/24), ratio 1:2
        let h = OracleHistory::from_records(
            vec![
                OracleRecord {
                    date: ym("2000-01"),
                    lam_oracle: Vector::from_vec(vec![2.0, 0.0]),
                },
                OracleRecord {
                    date: ym("2002-01"),
                    lam_oracle: Vector::from_vec(vec![0.0, 2.0]),
                },
            ],
            24.0,
        )
        .unwrap();
        let got = ao_eigenvalues(&h, ym("2002-02")).unwrap();
        assert!((got[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((got[1] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ewma_weights_decay() {
        assert_eq!(ewma_weight(0.0, 24.0), 1.0);
        assert_eq!(ewma_weight(24.0, 24.0), 0.5);
        assert!(ewma_weight(5.0, 24.0) > ewma_weight(6.0, 24.0));
    }

    #[test]
    fn history_rejects_disorder() {
        let v = Vector::from_vec(vec![1.0]);
        let mut h = OracleHistory::new(12.0).unwrap();
        h.push(OracleRecord {
            date: ym("2000-02"),
            lam_oracle: v.clone(),
        })
        .unwrap();
        assert!(h
            .push(OracleRecord {
                date: ym("2000-02"),
                lam_oracle: v.clone()
            })
            .is_err());
        assert!(OracleHistory::new(0.0).is_err());
    }

    #[test]
    fn ao_filter_cases() {
        let c = m2(0.5);
        let es = eig_sym(&c).unwrap();
        let back = ao_filter(&c, &es.eigenvalues, false).unwrap();
        assert!((back - &c).amax() < 1e-14);

        let ones = Vector::from_element(2, 1.0);
        assert!((ao_filter(&c, &ones, true).unwrap() - Matrix::identity(2, 2)).amax() < 1e-12);
        assert!((ao_filter(&c, &ones, false).unwrap() - Matrix::identity(2, 2)).amax() < 1e-12);

        let target = ao_filter(&c, &Vector::from_vec(vec![1.8, 0.2]), false).unwrap();
        assert!((target - m2(0.8)).amax() < 1e-12);
    }

    #[test]
    fn renormalized_filter_has_unit_diagonal() {
        let panel = random_panel(40, 6, 3);
        let x = crate::data::slice(&panel, IndexRange::new(0, 40)).unwrap();
        let (corr, _) = cov_to_corr(&spectral::sample_moments(&x).unwrap().cov).unwrap();
        let lam = Vector::from_vec(vec![3.0, 1.2, 0.8, 0.5, 0.3, 0.2]);
        let out = ao_filter(&corr, &lam, true).unwrap();
        for i in 0..6 {
            assert!((out[(i, i)] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn history_counts_and_append_only() {
        let panel = random_panel(60, 5, 11);
        let (t_is, t_oos) = (24, 6);
        // first pair's test window ends at row 29; asof must be after it
        let first_end = panel.dates()[t_is + t_oos - 1];
        let h = build_oracle_history(&panel, t_is, t_oos, first_end.add_months(1), 24.0).unwrap();
        assert_eq!(h.len(), 1);
        assert!(matches!(
            build_oracle_history(&panel, t_is, t_oos, first_end, 24.0),
            Err(Error::NoHistory(_))
        ));

        let later =
            build_oracle_history(&panel, t_is, t_oos, first_end.add_months(10), 24.0).unwrap();
        assert_eq!(later.len(), 10);
        assert_eq!(later.records()[0], h.records()[0]);

        let all = oracle_records(&panel, t_is, t_oos).unwrap();
        assert_eq!(all.len(), 60 - 30 + 1);
        assert_eq!(&all[..10], later.records());
    }

    #[test]
    fn cache_round_trip() {
        let panel = random_panel(50, 4, 5);
        let h = build_oracle_history(&panel, 20, 6, ym("1994-01"), 24.0).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = OracleHistory::read_csv(buf.as_slice(), 24.0).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn trace_conservation_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.random_range(2..12);
            let p1 = random_panel(30, n, rng.random());
            let p2 = random_panel(8, n, rng.random());
            let c1 = window_corr(&p1, IndexRange::new(0, 30)).unwrap();
            let c2 = window_corr(&p2, IndexRange::new(0, 8)).unwrap();
            let o = oracle_eigenvalues(&c1, &c2).unwrap();
            assert!((o.sum() - n as f64).abs() < 1e-10);
            assert!(o.iter().all(|&x| x >= 0.0));
        }
    }
}
