use thiserror::Error;

/// Errors produced by game construction and the iteration machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of games, policies, or vectors do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A numeric computation produced a non-finite or otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver did not converge within its iteration cap.
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
