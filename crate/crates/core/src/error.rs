use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("could not collect {needed} feasible points after {attempts} sampling batches; the feasible region may be empty or vanishingly small")]
    InfeasibleRegion { needed: usize, attempts: usize },

    #[error("candidate resampling budget exhausted after {attempts} attempts")]
    ResampleExhausted { attempts: usize },

    #[error("kriging fit failed: {0}")]
    Fit(String),

    #[error("external evaluation {id} timed out after {timeout_secs} s")]
    EvaluatorTimeout { id: u64, timeout_secs: f64 },

    #[error("malformed evaluator response: {line:?}")]
    Protocol { line: String },

    #[error("external evaluator failed: {message}")]
    ChildFailure { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
