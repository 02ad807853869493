//! CSV artifacts of backtests, sweeps and statistical comparisons.
//!
//! Every writer has a matching reader. Floats are written with the shortest
//! representation that parses back to the same value.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestResult, EstimatorKind, EstimatorSeries, SweepTable};
use crate::data::YearMonth;
use crate::error::{Error, Result};
use crate::portfolio::{scaled_cumulative_log_returns, DatedSeries};
use crate::stats::{model_confidence_set, wilcoxon_one_sided, McsConfig, McsResult};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpeRow {
    pub date: YearMonth,
    pub estimator: String,
    pub oos_sharpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub sharpe: f64,
    pub diversification: f64,
    pub turnover: f64,
    pub gross_leverage: f64,
    pub max_drawdown: f64,
    /// Mean L1 change of the ridge weights; empty for grid-free estimators.
    pub weight_turnover: Option<f64>,
    pub n_dates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub comparison: String,
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsRow {
    pub estimator: String,
    pub eliminated_at: Option<usize>,
    pub p_value: f64,
    pub survivor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub date: YearMonth,
    pub estimator: String,
    pub value: f64,
}

fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn sharpe_rows(result: &BacktestResult) -> Vec<SharpeRow> {
    let mut rows = Vec::with_capacity(result.dates.len() * result.series.len());
    for (i, date) in result.dates.iter().enumerate() {
        for s in &result.series {
            rows.push(SharpeRow {
                date: *date,
                estimator: s.name.clone(),
                oos_sharpe: s.sharpe[i],
            });
        }
    }
    rows
}

/// `sharpe_series.csv`: long format `date,estimator,oos_sharpe`.
pub fn write_sharpe_series<W: Write>(writer: W, result: &BacktestResult) -> Result<()> {
    write_rows(writer, &sharpe_rows(result))
}

pub fn read_sharpe_series<R: Read>(reader: R) -> Result<Vec<SharpeRow>> {
    read_rows(reader)
}

pub fn summary_rows(result: &BacktestResult) -> Vec<SummaryRow> {
    result
        .series
        .iter()
        .map(|s| SummaryRow {
            estimator: s.name.clone(),
            sharpe: s.metrics.sharpe_annualized,
            diversification: s.metrics.diversification,
            turnover: s.metrics.turnover,
            gross_leverage: s.metrics.gross_leverage,
            max_drawdown: s.metrics.max_drawdown,
            weight_turnover: s.mean_weight_turnover(),
            n_dates: s.dates.len(),
        })
        .collect()
}

pub fn write_summary<W: Write>(writer: W, result: &BacktestResult) -> Result<()> {
    write_rows(writer, &summary_rows(result))
}

pub fn read_summary<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    read_rows(reader)
}

/// File name of an estimator's weight CSV, e.g. `weights_UPSA-AO.csv`.
pub fn weights_file_name(series: &EstimatorSeries) -> String {
    format!("weights_{}.csv", series.name)
}

/// `weights_<estimator>.csv`: `date,alpha_1,...,alpha_l`. `None` for
/// estimators without ridge weights.
pub fn write_weights<W: Write>(writer: W, series: &EstimatorSeries) -> Result<Option<()>> {
    let Some(weights) = &series.weights else {
        return Ok(None);
    };
    let ell = weights.first().map_or(0, |w| w.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend((1..=ell).map(|k| format!("alpha_{k}")));
    w.write_record(&header)?;
    for (date, alpha) in series.dates.iter().zip(weights) {
        let mut rec = vec![date.to_string()];
        rec.extend(alpha.as_slice().iter().map(|a| a.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(Some(()))
}

/// Dates and the `dates x l` weight matrix of a weight CSV.
pub fn read_weights<R: Read>(reader: R) -> Result<(Vec<YearMonth>, Matrix)> {
    let mut r = csv::Reader::from_reader(reader);
    let ell = r.headers()?.len().saturating_sub(1);
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let date = rec.get(0).unwrap_or("");
        dates.push(date.parse().map_err(|_| Error::BadDate {
            row: row + 2,
            value: date.to_string(),
        })?);
        for (col, cell) in rec.iter().skip(1).enumerate() {
            values.push(cell.parse::<f64>().map_err(|_| Error::BadValue {
                row: row + 2,
                col: col + 1,
                value: cell.to_string(),
            })?);
        }
    }
    Ok((
        dates.clone(),
        Matrix::from_row_slice(dates.len(), ell, &values),
    ))
}

/// `sweep_<name>.csv`: the swept parameter followed by one mean-Sharpe
/// column per estimator and the number of rebalance dates.
pub fn write_sweep<W: Write>(writer: W, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![table.parameter.clone()];
    header.extend(table.estimators.iter().cloned());
    header.push("n_dates".into());
    w.write_record(&header)?;
    for ((v, row), n) in table
        .values
        .iter()
        .zip(&table.mean_sharpe)
        .zip(&table.n_dates)
    {
        let mut rec = vec![v.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        rec.push(n.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_sweep<R: Read>(reader: R) -> Result<SweepTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[header.len() - 1] != "n_dates" {
        return Err(Error::InvalidConfig("not a sweep table".into()));
    }
    let k = header.len() - 2;
    let mut table = SweepTable {
        parameter: header[0].to_string(),
        values: Vec::new(),
        estimators: header.iter().skip(1).take(k).map(str::to_string).collect(),
        mean_sharpe: Vec::new(),
        n_dates: Vec::new(),
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |col: usize| {
            rec[col].parse::<f64>().map_err(|_| Error::BadValue {
                row: row + 2,
                col,
                value: rec[col].to_string(),
            })
        };
        table.values.push(num(0)?);
        table
            .mean_sharpe
            .push((1..=k).map(num).collect::<Result<_>>()?);
        table.n_dates.push(num(k + 1)? as usize);
    }
    Ok(table)
}

/// One-sided Wilcoxon test that `a` beats `b` date by date.
pub fn compare(result: &BacktestResult, a: &str, b: &str) -> Result<TestRow> {
    let (sa, sb) = match (result.by_name(a), result.by_name(b)) {
        (Some(sa), Some(sb)) => (sa, sb),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "comparison {a} > {b}: unknown estimator"
            )))
        }
    };
    let diffs: Vec<f64> = sa
        .sharpe
        .iter()
        .zip(&sb.sharpe)
        .map(|(x, y)| x - y)
        .collect();
    let comparison = format!("{a} > {b}");
    match wilcoxon_one_sided(&diffs) {
        Ok(w) => Ok(TestRow {
            comparison,
            statistic: w.statistic,
            p_value: w.p_value,
            method: w.method.as_str().to_string(),
        }),
        Err(Error::TooFewDifferences { .. }) => Ok(TestRow {
            comparison,
            statistic: f64::NAN,
            p_value: f64::NAN,
            method: "too-few-differences".into(),
        }),
        Err(e) => Err(e),
    }
}

/// Every estimator against UPSA, then AvgUPSA-AO against every other
/// estimator, for whichever of those are present.
pub fn standard_comparisons(result: &BacktestResult) -> Result<Vec<TestRow>> {
    let mut pairs = Vec::new();
    let upsa = EstimatorKind::Upsa.name();
    let best = EstimatorKind::AvgUpsaAo.name();
    if result.by_name(upsa).is_some() {
        for s in result.series.iter().filter(|s| s.name != upsa) {
            pairs.push((s.name.clone(), upsa.to_string()));
        }
    }
    if result.by_name(best).is_some() {
        for s in result
            .series
            .iter()
            .filter(|s| s.name != best && s.name != upsa)
        {
            pairs.push((best.to_string(), s.name.clone()));
        }
    }
    pairs.iter().map(|(a, b)| compare(result, a, b)).collect()
}

pub fn write_tests<W: Write>(writer: W, rows: &[TestRow]) -> Result<()> {
    write_rows(writer, rows)
}

pub fn read_tests<R: Read>(reader: R) -> Result<Vec<TestRow>> {
    read_rows(reader)
}

/// Model Confidence Set over the per-date losses `-sharpe`.
pub fn sharpe_mcs(result: &BacktestResult, config: &McsConfig) -> Result<McsResult> {
    model_confidence_set(&(-result.sharpe_matrix()), &result.names(), config)
}

pub fn mcs_rows(mcs: &McsResult) -> Vec<McsRow> {
    mcs.elimination_order
        .iter()
        .map(|s| McsRow {
            estimator: s.model.clone(),
            eliminated_at: mcs.eliminated_at(&s.model),
            p_value: s.p_value,
            survivor: mcs.is_survivor(&s.model),
        })
        .collect()
}

pub fn write_mcs<W: Write>(writer: W, mcs: &McsResult) -> Result<()> {
    write_rows(writer, &mcs_rows(mcs))
}

pub fn read_mcs<R: Read>(reader: R) -> Result<Vec<McsRow>> {
    read_rows(reader)
}

/// Volatility-targeted cumulative log returns per estimator, dated by the
/// month each return is realized in.
pub fn cumulative_rows(result: &BacktestResult, target_vol: f64) -> Result<Vec<SeriesPoint>> {
    let mut rows = Vec::new();
    for s in &result.series {
        let dates: Vec<YearMonth> = s.dates.iter().map(|d| d.add_months(1)).collect();
        let scaled = scaled_cumulative_log_returns(
            &DatedSeries::new(dates, s.next_month_returns.clone())?,
            target_vol,
        )?;
        rows.extend(
            scaled
                .dates
                .iter()
                .zip(&scaled.values)
                .map(|(d, v)| SeriesPoint {
                    date: *d,
                    estimator: s.name.clone(),
                    value: *v,
                }),
        );
    }
    Ok(rows)
}

pub fn write_cumulative<W: Write>(writer: W, rows: &[SeriesPoint]) -> Result<()> {
    write_rows(writer, rows)
}

pub fn read_cumulative<R: Read>(reader: R) -> Result<Vec<SeriesPoint>> {
    read_rows(reader)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::{generate_synthetic_panel, run_backtest, BacktestConfig, EstimatorSpec};
    use crate::ridge::log_grid;

    fn result() -> BacktestResult {
        let p = generate_synthetic_panel(5, 84, 0.02, 21).unwrap();
        let cfg = BacktestConfig {
            t_is: 24,
            t_oos: 6,
            estimators: EstimatorKind::SHRINKAGE
                .iter()
                .map(|&k| EstimatorSpec::new(k).with_grid(log_grid(1e-5, 1e-1, 4).unwrap()))
                .collect(),
            ..BacktestConfig::default()
        };
        run_backtest(&p, &cfg).unwrap()
    }

    #[test]
    fn artifacts_round_trip() {
        let res = result();

        let mut buf = Vec::new();
        write_sharpe_series(&mut buf, &res).unwrap();
        assert_eq!(read_sharpe_series(&buf[..]).unwrap(), sharpe_rows(&res));

        let mut buf = Vec::new();
        write_summary(&mut buf, &res).unwrap();
        let rows = read_summary(&buf[..]).unwrap();
        assert_eq!(rows, summary_rows(&res));
        assert_eq!(
            rows.iter()
                .find(|r| r.estimator == "AO")
                .unwrap()
                .weight_turnover,
            None
        );

        let upsa = res.get(EstimatorKind::Upsa).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, upsa).unwrap().unwrap();
        let (dates, m) = read_weights(&buf[..]).unwrap();
        assert_eq!(dates, upsa.dates);
        for (i, w) in upsa.weights.as_ref().unwrap().iter().enumerate() {
            assert_eq!(m.row(i).iter().copied().collect::<Vec<_>>(), w.as_slice());
        }
        assert!(
            write_weights(Vec::new(), res.get(EstimatorKind::Ao).unwrap())
                .unwrap()
                .is_none()
        );

        let tests = standard_comparisons(&res).unwrap();
        assert_eq!(tests.len(), 4 + 3);
        let mut buf = Vec::new();
        write_tests(&mut buf, &tests).unwrap();
        assert_eq!(read_tests(&buf[..]).unwrap(), tests);

        let mcs = sharpe_mcs(
            &res,
            &McsConfig {
                n_boot: 200,
                ..McsConfig::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_mcs(&mut buf, &mcs).unwrap();
        assert_eq!(read_mcs(&buf[..]).unwrap(), mcs_rows(&mcs));

        let cum = cumulative_rows(&res, 0.1).unwrap();
        assert_eq!(cum.len(), res.dates.len() * res.series.len());
        let mut buf = Vec::new();
        write_cumulative(&mut buf, &cum).unwrap();
        assert_eq!(read_cumulative(&buf[..]).unwrap(), cum);
    }

    #[test]
    fn sweep_round_trip() {
        let table = SweepTable {
            parameter: "grid_lo".into(),
            values: vec![1e-10, 1e-4],
            estimators: vec!["UPSA".into(), "AO".into()],
            mean_sharpe: vec![vec![0.1 + 0.2, -1.0 / 3.0], vec![f64::MAX, 2e-300]],
            n_dates: vec![10, 10],
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &table).unwrap();
        assert_eq!(read_sweep(&buf[..]).unwrap(), table);
    }
}
