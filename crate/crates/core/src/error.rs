use thiserror::Error;

/// Errors raised by the inference pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("shard has no observations")]
    EmptyShard,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("matrix `{0}` is singular or not positive definite")]
    SingularMatrix(String),

    #[error("target density is not finite at the initial point")]
    InvalidInit,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no draws supplied")]
    EmptyDraws,

    #[error("level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("quantile grids do not match")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("samples have zero spread")]
    DegenerateSample,

    #[error("need at least {needed} draws, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("range error: {0}")]
    Range(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
