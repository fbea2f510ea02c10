use thiserror::Error;

use crate::mission::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },

    #[error("unknown identifier `{name}` at {line}:{column}")]
    UnknownIdentifier {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("malformed formula: {0}")]
    MalformedFormula(String),

    #[error("formula needs samples up to index {required} but the signal ends at index {last}")]
    Horizon { required: usize, last: usize },

    #[error("smoothing sharpness must be positive, got {0}")]
    NonPositiveBeta(f64),

    #[error("invalid time grid: TN = {tn}, Ts = {ts}")]
    TimeGrid { tn: f64, ts: f64 },

    #[error("trajectory is dynamically inconsistent at k = {k}, axis {axis} (residual {residual:e})")]
    Inconsistent { k: usize, axis: usize, residual: f64 },

    #[error("signal shape mismatch: {0}")]
    Shape(String),

    #[error("invalid mission configuration:\n{0}")]
    InvalidConfig(ValidationReport),

    #[error("mission horizon too short: routes need {required_samples} samples, minimal feasible TN = {min_tn} s")]
    HorizonTooShort { required_samples: usize, min_tn: f64 },

    #[error("edge selection violates routing constraints: {0}")]
    Structural(String),

    #[error("routing model is infeasible")]
    Infeasible,

    #[error("non-finite objective produced by subformula at path {path}")]
    NonFinite { path: String },

    #[error("residual mission infeasible: {reason}")]
    ResidualInfeasible { reason: String, min_tn: Option<f64> },

    #[error("failed to parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
