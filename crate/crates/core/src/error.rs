use thiserror::Error;

/// Errors surfaced by the planner library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("invalid conic program: {0}")]
    InvalidProgram(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("initialization infeasible: {0}")]
    Initialization(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("oracle grid too large: {0} points (limit 10^7)")]
    GridTooLarge(u128),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
