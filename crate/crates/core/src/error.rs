use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// `e^{-ψ}` is not integrable: the origin is not interior to the atom hull.
    #[error("potential is not integrable (recession rate {rate:.3e} <= 0)")]
    NotIntegrable { rate: f64 },

    #[error("integral diverges along recession direction ({0}, {1})")]
    DivergentDirection(f64, f64),

    #[error("polygon is degenerate or self-intersecting: {0}")]
    BadPolygon(String),

    #[error("{0} is not supported in dimension {1}")]
    UnsupportedDimension(&'static str, usize),

    /// Importance weights are too heavy-tailed for the requested proposal.
    #[error("importance weights exploded (relative variance {relative_variance:.3e}); use a heavier-tailed proposal")]
    WeightExplosion { relative_variance: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
