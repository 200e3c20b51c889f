use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so that [`Error::exit_code`] can map them onto the
/// command-line exit codes: configuration problems, bad input data and
/// numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("non-positive price {price} for {symbol} on {day}")]
    NonPositivePrice {
        symbol: String,
        day: String,
        price: f64,
    },

    #[error("zero-variance {side} column for symbol {symbol}")]
    ZeroVariance { symbol: String, side: &'static str },

    #[error("lag {lag} consumes the entire day ({slots} return slots per day)")]
    LagTooLarge { lag: usize, slots: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::LagTooLarge { .. } => 1,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Data(_)
            | Error::NonPositivePrice { .. }
            | Error::ZeroVariance { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}
