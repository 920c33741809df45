use thiserror::Error;

pub type Result<T> = std::result::Result<T, LndmError>;

#[derive(Debug, Error)]
pub enum LndmError {
    /// A value lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model is not identifiable: {0}")]
    Identifiability(String),

    /// A symmetric factorization failed.
    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("hyperparameter optimisation did not converge after {iterations} iterations; last simplex values {trace}")]
    Optimization { iterations: usize, trace: String },

    #[error("{requested} posterior samples requested, at least {minimum} are needed")]
    InsufficientSamples { requested: usize, minimum: usize },

    /// Malformed or missing input data.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LndmError {
    /// True for failures of the numerics rather than of the user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LndmError::Conditioning(_) | LndmError::Optimization { .. }
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LndmError::Domain(msg.into())
    }
}
