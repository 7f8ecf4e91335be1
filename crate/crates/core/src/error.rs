//! Error type shared across the crate.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A cloud-cover fraction or probability left its legal domain.
    #[error("value {value} out of range for {what}")]
    OutOfRange { what: &'static str, value: f64 },

    /// Paired inputs whose lengths must agree did not.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A feature variant was requested that the data cannot supply.
    #[error("missing covariate: {0}")]
    MissingCovariate(&'static str),

    /// A non-finite number appeared where a finite one is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Training was attempted on an empty (or too small) sample.
    #[error("empty training set: {0}")]
    EmptyTrainingSet(&'static str),

    /// The log score of an event assigned probability zero.
    #[error("zero probability assigned to the observed class (okta index {index})")]
    ZeroProbability { index: usize },

    /// A score series was constant where variability is required.
    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),

    /// Two score series could not be aligned for comparison.
    #[error("incomparable series: {0}")]
    IncomparableSeries(String),

    /// A configuration value failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Not enough history to build a single training window.
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    /// A text record (dataset row, model file, config) failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for a parse failure with a 1-based line number.
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Shorthand for a config validation failure.
    pub fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig(message.into())
    }
}
