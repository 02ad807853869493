//! Monthly return panels: CSV ingestion, validation and walk-forward windows.
//!
//! The on-disk format is a header `date,<id1>,...,<idn>` followed by one row
//! per month, dates written `YYYY-MM`, returns as decimal simple returns.
//! Empty cells (and `NA`/`NaN`) are treated as missing.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn add_months(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `self` to `later`.
    pub fn months_until(self, later: YearMonth) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("expected YYYY-MM, got {s:?}"));
        }
        let year: i32 = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u8 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in {s:?}"))
    }
}

impl TryFrom<String> for YearMonth {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(d: YearMonth) -> String {
        d.to_string()
    }
}

/// Dated `T_total x n` matrix of simple monthly returns, rows in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<YearMonth>,
    asset_ids: Vec<String>,
    returns: Matrix,
}

impl ReturnsPanel {
    /// Builds a panel and checks every invariant: consecutive months, unique
    /// ids, finite returns above -1, matching dimensions.
    pub fn new(dates: Vec<YearMonth>, asset_ids: Vec<String>, returns: Matrix) -> Result<Self> {
        if dates.is_empty() || asset_ids.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if returns.nrows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                actual: returns.nrows(),
            });
        }
        if returns.ncols() != asset_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: asset_ids.len(),
                actual: returns.ncols(),
            });
        }
        check_dates(&dates)?;
        check_unique(&asset_ids)?;
        for r in 0..returns.nrows() {
            for c in 0..returns.ncols() {
                let v = returns[(r, c)];
                if !v.is_finite() {
                    return Err(Error::MissingValue { row: r, col: c });
                }
                if v <= -1.0 {
                    return Err(Error::ReturnBelowMinusOne {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            asset_ids,
            returns,
        })
    }

    pub fn dates(&self) -> &[YearMonth] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    /// Number of months.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Index of `date` in the panel, if present.
    pub fn index_of(&self, date: YearMonth) -> Option<usize> {
        let first = *self.dates.first()?;
        let idx = first.months_until(date);
        (idx >= 0 && (idx as usize) < self.dates.len()).then_some(idx as usize)
    }

    /// Keeps the first `len` months.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::OutOfBounds {
                start: 0,
                end: len,
                len: self.len(),
            });
        }
        Ok(Self {
            dates: self.dates[..len].to_vec(),
            asset_ids: self.asset_ids.clone(),
            returns: self.returns.rows(0, len).into_owned(),
        })
    }

    /// Writes the panel in the ingestion format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.n_assets() + 1);
        header.push("date".to_string());
        header.extend(self.asset_ids.iter().cloned());
        w.write_record(&header)?;
        for (r, d) in self.dates.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.n_assets() + 1);
            rec.push(d.to_string());
            rec.extend(self.returns.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn check_dates(dates: &[YearMonth]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        let (prev, next) = (w[0], w[1]);
        if next <= prev {
            return Err(Error::NonMonotoneDates {
                row: i + 1,
                prev,
                next,
            });
        }
        if prev.months_until(next) != 1 {
            return Err(Error::DateGap {
                row: i + 1,
                prev,
                next,
            });
        }
    }
    Ok(())
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateAsset(id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Any missing cell is an error.
    #[default]
    Strict,
    /// Columns with a missing cell inside the requested span are removed.
    DropIncomplete,
}

impl FromStr for MissingPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "drop-incomplete" | "drop" => Ok(Self::DropIncomplete),
            _ => Err(format!("unknown missing-data policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub policy: MissingPolicy,
    /// First month to keep (inclusive).
    pub start: Option<YearMonth>,
    /// Last month to keep (inclusive).
    pub end: Option<YearMonth>,
}

impl LoadOptions {
    pub fn with_policy(policy: MissingPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnsPanel,
    /// Asset ids removed under [`MissingPolicy::DropIncomplete`].
    pub dropped: Vec<String>,
}

/// Loads and validates a return panel from a CSV file.
pub fn load_returns_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadedPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_returns_csv(file, opts)
}

/// Same as [`load_returns_csv`] over any reader.
pub fn read_returns_csv<R: Read>(reader: R, opts: &LoadOptions) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::EmptyPanel);
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    check_unique(&ids)?;
    let n = ids.len();

    let mut dates = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(Error::RaggedRow {
                row,
                expected: n + 1,
                found: rec.len(),
            });
        }
        let date: YearMonth = rec[0].parse().map_err(|_| Error::BadDate {
            row,
            value: rec[0].to_string(),
        })?;
        dates.push(date);
        for (col, field) in rec.iter().skip(1).enumerate() {
            cells.push(parse_cell(field).map_err(|_| Error::BadValue {
                row,
                col,
                value: field.to_string(),
            })?);
        }
    }
    check_dates(&dates)?;

    let keep_rows: Vec<usize> = (0..dates.len())
        .filter(|&r| {
            opts.start.is_none_or(|s| dates[r] >= s) && opts.end.is_none_or(|e| dates[r] <= e)
        })
        .collect();
    if keep_rows.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let cell = |r: usize, c: usize| cells[r * n + c];
    let mut keep_cols = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for (c, id) in ids.iter().enumerate() {
        let first_missing = keep_rows.iter().position(|&r| cell(r, c).is_none());
        match (first_missing, opts.policy) {
            (None, _) => keep_cols.push(c),
            (Some(row), MissingPolicy::Strict) => return Err(Error::MissingValue { row, col: c }),
            (Some(_), MissingPolicy::DropIncomplete) => dropped.push(id.clone()),
        }
    }
    if keep_cols.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let returns = Matrix::from_fn(keep_rows.len(), keep_cols.len(), |i, j| {
        cell(keep_rows[i], keep_cols[j]).expect("missing cells filtered above")
    });
    let panel = ReturnsPanel::new(
        keep_rows.iter().map(|&r| dates[r]).collect(),
        keep_cols.iter().map(|&c| ids[c].clone()).collect(),
        returns,
    )?;
    Ok(LoadedPanel { panel, dropped })
}

fn parse_cell(field: &str) -> std::result::Result<Option<f64>, ()> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = f.parse().map_err(|_| ())?;
    if v.is_finite() {
        Ok(Some(v))
    } else {
        Err(())
    }
}

/// Half-open row interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One calibration/test pair of a walk-forward schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSplit {
    pub cal_range: IndexRange,
    pub test_range: IndexRange,
    /// Last calibration month.
    pub rebalance_date: YearMonth,
}

/// Maximal list of `(calibration, test)` splits advancing by `step` months.
pub fn walk_forward_splits(
    panel: &ReturnsPanel,
    t_is: usize,
    t_oos: usize,
    step: usize,
) -> Result<Vec<WindowSplit>> {
    if t_is < 2 || t_oos < 1 || step < 1 {
        return Err(Error::InvalidConfig(format!(
            "walk-forward needs t_is >= 2, t_oos >= 1, step >= 1 (got {t_is}, {t_oos}, {step})"
        )));
    }
    let total = panel.len();
    if t_is + t_oos > total {
        return Err(Error::PanelTooShort {
            required: t_is + t_oos,
            available: total,
        });
    }
    Ok((0..=total - t_is - t_oos)
        .step_by(step)
        .map(|start| WindowSplit {
            cal_range: IndexRange::new(start, start + t_is),
            test_range: IndexRange::new(start + t_is, start + t_is + t_oos),
            rebalance_date: panel.dates[start + t_is - 1],
        })
        .collect())
}

/// Copies rows `range` of the panel's return matrix.
pub fn slice(panel: &ReturnsPanel, range: IndexRange) -> Result<Matrix> {
    if range.is_empty() {
        return Err(Error::EmptyRange);
    }
    if range.end > panel.len() {
        return Err(Error::OutOfBounds {
            start: range.start,
            end: range.end,
            len: panel.len(),
        });
    }
    Ok(panel.returns.rows(range.start, range.len()).into_owned())
}
