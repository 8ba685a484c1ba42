use thiserror::Error;

/// Errors returned by the clustering, net, oracle and pipeline routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weight {0}: weights must be finite and non-negative")]
    InvalidWeight(f64),

    #[error("non-finite coordinate in input")]
    NonFinite,

    #[error("k = {k} is invalid for a support of size {support}")]
    InvalidK { k: usize, support: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("search space of {0} candidates exceeds the brute-force limit")]
    SearchTooLarge(u128),

    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("point norm {0} exceeds the unit ball")]
    OutsideBall(f64),

    #[error("malformed transcript: {0}")]
    Wire(String),

    #[error("node budget exceeded: {nodes} > {budget}")]
    BudgetExceeded { nodes: u64, budget: u64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
