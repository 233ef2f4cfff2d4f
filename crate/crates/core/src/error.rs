use thiserror::Error;

use crate::diagonal::KadisonReport;

/// Errors raised by the construction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid tail: {0}")]
    InvalidTail(String),

    #[error("majorization fails at n = {index}: {lhs} > {rhs}")]
    Majorization { index: usize, lhs: f64, rhs: f64 },

    #[error("sum mismatch: diagonal sums to {diag}, eigenvalues sum to {lambda}")]
    SumMismatch { diag: f64, lambda: f64 },

    #[error("sum {0} is not an integer")]
    NonIntegerSum(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("target {target} outside attainable interval [{lo}, {hi}]")]
    Unattainable { target: f64, lo: f64, hi: f64 },

    #[error("infeasible restoration step: {0}")]
    InfeasibleStep(String),

    #[error("needs more terms: requested {requested}, only {available} available")]
    NeedsMoreTerms { requested: usize, available: usize },

    #[error("no projection has this diagonal (a = {}, b = {})", .0.a, .0.b)]
    Infeasible(Box<KadisonReport>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
