use thiserror::Error;

/// Errors produced by the planekit library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate ray: |n·K⁻¹q| = {0:e} below threshold")]
    DegenerateRay(f64),
    #[error("plane passes through or behind the camera center (offset {0:e})")]
    PlaneThroughOrigin(f64),
    #[error("loss has no contributing pixels: {0}")]
    EmptyLoss(&'static str),
    #[error("metric has no contributing samples: {0}")]
    EmptyMetric(&'static str),
    #[error("instance region is empty")]
    EmptyInstance,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
