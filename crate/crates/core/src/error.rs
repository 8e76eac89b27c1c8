use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate stencil at {at:?}: {reason}")]
    DegenerateStencil { at: (usize, usize), reason: String },

    /// A neighbour needed for patch extraction is missing (boundary or mask).
    #[error("boundary case at coarse point {0:?}")]
    BoundaryCase((usize, usize)),

    /// An edge row of P cannot be normalized.
    #[error("row normalization infeasible at fine point {0:?}")]
    FallbackNeeded((usize, usize)),

    #[error("singular solve: {0}")]
    SingularSolve(String),

    #[error("dense size {size} exceeds cap {cap}")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("degenerate Fourier mode {mode:?}: {reason}")]
    DegenerateMode { mode: (usize, usize), reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
