use thiserror::Error;

/// Errors produced by the attention spectra toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("exponent overflow: beta * max|S| = {exponent} exceeds the f64 range")]
    Overflow { exponent: f64 },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("cannot remove top {k} values from a spectrum of length {len}")]
    TopKTooLarge { k: usize, len: usize },

    #[error("eigenvalue computation failed to converge (seed {seed:?})")]
    NoConvergence { seed: Option<u64> },

    #[error("ambiguous root tracking at x = {x}")]
    RootTracking { x: f64 },

    #[error("failed to bracket root: {0}")]
    Bracket(&'static str),

    #[error("numerical underflow: {0}")]
    Underflow(&'static str),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
