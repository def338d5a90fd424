use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid element chain: {0}")]
    InvalidChain(String),

    #[error("zero total counts for {0}")]
    ZeroTotal(&'static str),

    #[error("non-positive fitted peak for {0}")]
    NonPositivePeak(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("incomplete records: {0}")]
    IncompleteRecords(String),

    #[error("calibration has no physical solution: {0}")]
    Calibration(String),

    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),

    #[error("csv: {0}")]
    Csv(String),

    #[error("missing {run} run: {path} not found")]
    MissingRun { run: &'static str, path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { name, value, range })
    }
}
