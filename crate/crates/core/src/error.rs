use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    /// Two or more consecutive hours are missing; averaging neighbours is not
    /// meaningful any more.
    #[error("irreparable gap of {length} hours starting at day {day}, hour {hour}")]
    IrreparableGap {
        day: usize,
        hour: usize,
        length: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("underdetermined least-squares problem: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("forecast error: {0}")]
    Forecast(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
