use thiserror::Error;

/// Errors raised by the measurement library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalizable (norm {norm:e})")]
    NotNormalizable { norm: f64 },

    #[error("system dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("basis vectors are linearly dependent (residual norm {residual:e})")]
    DegenerateInput { residual: f64 },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not idempotent (max |A^2 - A| = {residual:e})")]
    NotIdempotent { residual: f64 },

    #[error("pre- and post-selected states are orthogonal (|<psi_f|psi_i>| = {overlap:e})")]
    OrthogonalPostSelection { overlap: f64 },

    #[error("weak value in the selection context does not match the operator (drift {drift:e})")]
    ContextMismatch { drift: f64 },

    #[error("post-selection success probability {probability:e} underflows")]
    PostSelectionFailure { probability: f64 },

    #[error("pointer support leaves the grid: {0}")]
    GridContainment(String),

    #[error("invalid pointer grid: {0}")]
    InvalidGrid(String),

    #[error("sensitivity undefined: {0}")]
    UndefinedSensitivity(String),

    #[error("first-order variance is negative ({variance:e}); coupling outside the weak regime")]
    InvalidRegime { variance: f64 },
}

pub type Result<T> = std::result::Result<T, MeasureError>;
