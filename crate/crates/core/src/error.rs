use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NarError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("corrupted state: {0}")]
    Corrupted(String),
    #[error("chromosome index {index} out of range (N = {n})")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("singular multiplier system at constraint row {row}")]
    Singular { row: String },
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no heterochromatin mass to localize")]
    EmptyHeterochromatin,
}

pub type Result<T, E = NarError> = std::result::Result<T, E>;
