use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: shape mismatches, empty inputs, out-of-range values.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A ranking metric is not defined for the given labels (e.g. one class only).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty file: no header row")]
    MissingHeader,
    #[error("header must end with a `label` column, found `{found}`")]
    BadHeader { found: String },
    #[error("file has a header but no data rows")]
    NoRows,
    #[error("row {row}: malformed record: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column} (`{name}`): value `{value}` is not 0 or 1")]
    NonBinary {
        row: usize,
        column: usize,
        name: String,
        value: String,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
