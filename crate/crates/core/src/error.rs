use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not expansive: smallest eigenvalue modulus {min_modulus}")]
    NotExpansive { min_modulus: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("no real logarithm available: {0}")]
    NotExponential(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coverage gap at frequency {xi:?}")]
    CoverageGap { xi: Vec<f64> },
    #[error("Calderon denominator {value:e} below threshold at frequency {xi:?}")]
    DivisionUnderflow { xi: Vec<f64>, value: f64 },
    #[error("scale {scale} aliases: spectral level {level} exceeds grid limit {limit}")]
    Aliasing { scale: f64, level: f64, limit: f64 },
    #[error("no admissible window inside the reliable region")]
    WindowOutOfDomain,
    #[error("iteration diverged at step {iteration}: residual {residual:e}")]
    Diverged { iteration: usize, residual: f64 },
    #[error("ill-conditioned: condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
