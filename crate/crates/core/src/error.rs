use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum FexpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature did not converge after {refinements} refinements (last change {last_change:e})")]
    QuadratureNonConvergence { refinements: usize, last_change: f64 },

    #[error("matrix is not positive definite: recursion broke down at step {step} (pivot {pivot:e})")]
    NotPositiveDefinite { step: usize, pivot: f64 },

    #[error("autocovariance sequence has {available} lags, {required} required")]
    InsufficientLags { available: usize, required: usize },

    #[error("dimension {n} exceeds the dense cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("circulant embedding is not PSD up to size {max_size} and n = {n} exceeds the dense cap")]
    EmbeddingFailure { n: usize, max_size: usize },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("likelihood evaluation failed at d = {d}, theta = {theta:?}: {reason}")]
    LikelihoodFailure {
        d: f64,
        theta: Vec<f64>,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FexpError>;
