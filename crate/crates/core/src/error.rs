use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quantile {q} is not reachable (ceiling {q_max})")]
    InfeasibleQuantile { q: f64, q_max: f64 },
    #[error("instance too large: {0}")]
    Size(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("ordinary-good property violated: {0}")]
    OrdinaryGood(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
