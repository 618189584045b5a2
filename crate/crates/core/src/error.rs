use thiserror::Error;

/// Errors raised by the diagonalization pipeline.
#[derive(Debug, Error)]
pub enum DickeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix of dimension {dim} needs ~{required_mb} MiB, above the {budget_mb} MiB budget")]
    Capacity {
        dim: usize,
        required_mb: u64,
        budget_mb: u64,
    },

    #[error("eigensolver failed to converge (dim {dim}): {detail}")]
    Solver { dim: usize, detail: String },

    #[error("parity of state {state} not resolved: <Pi> = {value}")]
    ParityResolution { state: usize, value: f64 },

    #[error("polynomial fit failed: {reason} (condition estimate {condition:e})")]
    Fit { reason: String, condition: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DickeError>;
