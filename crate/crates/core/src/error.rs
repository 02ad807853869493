use thiserror::Error;

use crate::data::YearMonth;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- ingestion -------------------------------------------------------
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unparseable date {value:?} on data row {row}")]
    BadDate { row: usize, value: String },

    #[error("unparseable value {value:?} at row {row}, column {col}")]
    BadValue {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("dates are not strictly increasing at row {row} ({prev} then {next})")]
    NonMonotoneDates {
        row: usize,
        prev: YearMonth,
        next: YearMonth,
    },

    #[error("date gap at row {row}: {prev} is followed by {next}")]
    DateGap {
        row: usize,
        prev: YearMonth,
        next: YearMonth,
    },

    #[error("duplicate asset id {0:?}")]
    DuplicateAsset(String),

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("return {value} at row {row}, column {col} is not above -1")]
    ReturnBelowMinusOne { row: usize, col: usize, value: f64 },

    #[error("panel is empty after cleaning")]
    EmptyPanel,

    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    // ---- windows and slicing ---------------------------------------------
    #[error("panel too short: need {required} months, have {available}")]
    PanelTooShort { required: usize, available: usize },

    #[error("empty index range")]
    EmptyRange,

    #[error("range {start}..{end} out of bounds for {len} rows")]
    OutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    // ---- linear algebra ---------------------------------------------------
    #[error("degenerate sample: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix has a negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),

    #[error("asset {asset} has zero variance")]
    ZeroVariance { asset: usize },

    #[error("negative volatility for asset {asset}")]
    NegativeVolatility { asset: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    // ---- grids and weights -----------------------------------------------
    #[error("invalid penalty grid: {0}")]
    InvalidGrid(String),

    #[error("invalid ridge weights: {0}")]
    InvalidWeights(String),

    // ---- average oracle ----------------------------------------------------
    #[error("no oracle records strictly before {0}")]
    NoHistory(YearMonth),

    #[error("half-life must be positive, got {0}")]
    InvalidHalfLife(f64),

    #[error("history dates must be strictly increasing ({prev} then {next})")]
    UnorderedHistory { prev: YearMonth, next: YearMonth },

    #[error("weight history is empty up to the requested date")]
    EmptyHistory,

    // ---- portfolios --------------------------------------------------------
    #[error("mean vector is zero; max-Sharpe direction undefined")]
    ZeroMean,

    #[error("realized variance is zero")]
    DegenerateVariance,

    #[error("series too short: need {required}, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("rolling standard deviation is zero at position {0}")]
    ZeroRollingStd(usize),

    // ---- statistics --------------------------------------------------------
    #[error("need at least {required} nonzero differences, got {actual}")]
    TooFewDifferences { required: usize, actual: usize },

    #[error("model confidence set needs {0}")]
    InvalidMcsInput(String),

    // ---- configuration -------------------------------------------------------
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("at {date}: {source}")]
    AtDate {
        date: YearMonth,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Io { .. }
            | Csv(_)
            | BadDate { .. }
            | BadValue { .. }
            | NonMonotoneDates { .. }
            | DateGap { .. }
            | DuplicateAsset(_)
            | MissingValue { .. }
            | ReturnBelowMinusOne { .. }
            | EmptyPanel
            | RaggedRow { .. }
            | PanelTooShort { .. } => ErrorCategory::Data,
            InvalidGrid(_)
            | InvalidHalfLife(_)
            | InvalidConfig(_)
            | InvalidMcsInput(_)
            | EmptyRange
            | OutOfBounds { .. } => ErrorCategory::Config,
            AtDate { source, .. } => source.category(),
            _ => ErrorCategory::Numeric,
        }
    }

    pub(crate) fn at(self, date: YearMonth) -> Error {
        match self {
            e @ Error::AtDate { .. } => e,
            e => Error::AtDate {
                date,
                source: Box::new(e),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}
