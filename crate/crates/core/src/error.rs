use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("epsilon must lie in [0, 1/2), got {0}")]
    InvalidEpsilon(f64),

    #[error("epsilon = 0 has a single extremal point; decomposition is undefined")]
    DegenerateEpsilon,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("distribution violates the SV condition at prefix {prefix:?} (P(0|prefix) = {conditional})")]
    SvViolation { prefix: String, conditional: f64 },

    #[error("{what} = {value} is out of range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no trials survived post-selection")]
    NoKeptTrials,

    #[error("settings distribution has zero mass on chain pairs")]
    ZeroChainMass,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(what: &'static str, value: impl ToString, range: &str) -> Error {
    Error::OutOfRange {
        what,
        value: value.to_string(),
        range: range.to_string(),
    }
}
