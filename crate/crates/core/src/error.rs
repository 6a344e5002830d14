use std::path::PathBuf;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A sliding window longer than the available data was requested.
    #[error("window length {window} exceeds the {available} available columns")]
    WindowTooLong {
        /// Requested window length.
        window: usize,
        /// Number of columns actually available.
        available: usize,
    },

    /// A window length of zero was requested.
    #[error("window length must be at least 1")]
    ZeroWindow,

    /// An input that must be nonnegative contained a negative entry.
    #[error("negative entry {value} at ({row}, {col}) in {what}")]
    NegativeEntry {
        /// Description of the offending input.
        what: &'static str,
        /// Row of the offending entry.
        row: usize,
        /// Column of the offending entry.
        col: usize,
        /// The offending value.
        value: f64,
    },

    /// An input contained a NaN or infinite entry.
    #[error("non-finite entry at ({row}, {col}) in {what}")]
    NonFiniteEntry {
        /// Description of the offending input.
        what: &'static str,
        /// Row of the offending entry.
        row: usize,
        /// Column of the offending entry.
        col: usize,
    },

    /// Matrix or tensor dimensions were inconsistent.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// Operation that detected the mismatch.
        what: &'static str,
        /// Expected shape description.
        expected: String,
        /// Actual shape description.
        actual: String,
    },

    /// A panel with no rows or no columns was supplied.
    #[error("empty panel: {0}")]
    EmptyPanel(&'static str),

    /// A time index outside the panel was requested.
    #[error("time index {index} out of range for panel of length {len}")]
    TimeIndexOutOfRange {
        /// Requested column index.
        index: usize,
        /// Number of columns in the panel.
        len: usize,
    },

    /// Row labels were missing, duplicated, or of the wrong length.
    #[error("invalid row labels: {0}")]
    InvalidLabels(String),

    /// A case CSV could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    CsvParse {
        /// 1-based line number in the source file.
        line: usize,
        /// 1-based column (field) number in the source file.
        column: usize,
        /// What went wrong.
        message: String,
    },

    /// The data section of a case CSV was empty.
    #[error("case table has no data rows")]
    EmptyTable,

    /// Input series did not share a common date range.
    #[error("date range mismatch: {0}")]
    DateRangeMismatch(String),

    /// A requested country was not present in the parsed table.
    #[error("country {0:?} not found in case table")]
    MissingCountry(String),

    /// A configuration value violated an invariant.
    #[error("invalid config: {field}: {message}")]
    InvalidConfig {
        /// Dotted path of the offending field.
        field: String,
        /// Constraint that was violated.
        message: String,
    },

    /// A checkpoint document was malformed or inconsistent.
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    /// A recursive extrapolation step produced a non-finite prediction.
    #[error("non-finite prediction at extrapolation step {step}")]
    NonFinitePrediction {
        /// 0-based extrapolation step that failed.
        step: usize,
    },

    /// Every ensemble trial failed.
    #[error("all {trials} trials failed; first failure: {first}")]
    AllTrialsFailed {
        /// Number of trials attempted.
        trials: usize,
        /// Message of the first per-trial failure.
        first: String,
    },

    /// An I/O operation failed.
    #[error("{path}: {source}")]
    Io {
        /// File involved in the failed operation.
        path: PathBuf,
        /// Underlying I/O error.
        source: std::io::Error,
    },

    /// A JSON document could not be read or written.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// A TOML config could not be parsed.
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Wrap an I/O error with the file it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn dims(
        what: &'static str,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch { what, expected: expected.into(), actual: actual.into() }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), message: message.into() }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
