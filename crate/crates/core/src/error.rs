use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension-deficient input: {0}")]
    DimensionDeficient(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// W = Hess h + h I failed to be positive definite, or h left the admissible range.
    #[error("convexity lost at node {node}: min eigenvalue of W = {min_eig:e}, h = {h:e}")]
    Convexity { node: usize, min_eig: f64, h: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("flow step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("density generation failed: {0}")]
    Generation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
