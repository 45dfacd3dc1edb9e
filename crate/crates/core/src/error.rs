use thiserror::Error;

/// Errors raised by evidence computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite{}", jitter_note(*.jitter))]
    NotPositiveDefinite { jitter: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate curvature at the optimum: {0}")]
    DegenerateCurvature(String),

    #[error("optimum lies on the boundary of the prior support")]
    BoundaryOptimum,

    #[error("all samples have zero likelihood")]
    DegenerateEstimate,

    #[error("quadrature did not converge (last change {last_change:e} at {nodes} nodes)")]
    QuadratureNotConverged { last_change: f64, nodes: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn jitter_note(jitter: f64) -> String {
    if jitter > 0.0 {
        format!(" (after jitter {jitter:e})")
    } else {
        String::new()
    }
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
