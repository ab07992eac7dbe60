use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coefficient at index {index}: {reason}")]
    InvalidCoefficient { index: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("communication graph must be connected")]
    Disconnected,

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem size {n} exceeds brute-force cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("numeric failure at t = {}: {}", .0.t, .0.reason)]
    Numeric(Box<crate::dynamics::NumericFailure>),

    #[error("incomplete campaign: {0}")]
    IncompleteCampaign(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
