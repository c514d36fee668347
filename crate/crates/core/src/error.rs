use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),

    #[error("integration failed after {steps} steps at progress {reached} of {requested}: {reason}")]
    Integration {
        steps: usize,
        reached: f64,
        requested: f64,
        reason: String,
    },

    #[error("solver did not converge: {message} (last residuals {residuals:?})")]
    Solver { message: String, residuals: Vec<f64> },

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("caustic: {0}")]
    Caustic(String),

    #[error("reliability: {0}")]
    Reliability(String),

    #[error("inconsistent convention: {0}")]
    Convention(String),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
