//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid specs do not match: N = {0} vs N = {1}")]
    SpecMismatch(usize, usize),

    #[error("grid function is not interior (nonzero boundary value at ({0}, {1}))")]
    NotInterior(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix index ({row}, {col}) out of range for {rows}x{cols}")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-positive pivot {value:.6e} at index {index}; matrix is not positive definite")]
    NonPositivePivot { index: usize, value: f64 },

    #[error("diffusion coefficient must be positive everywhere (found {value:.6e} at ({i}, {j}))")]
    NonPositiveDiffusion { i: usize, j: usize, value: f64 },

    #[error("unknown problem '{0}'; valid names: {1}")]
    UnknownProblem(String, String),

    #[error("generalized eigensolve failed: {0}")]
    EigenFailure(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("loss is negative beyond round-off ({0:.6e}); Gram matrix is not SPD")]
    NegativeLoss(f64),

    #[error("robustness constants must satisfy mu >= alpha > 0 (got mu = {mu}, alpha = {alpha})")]
    InvalidConstants { mu: f64, alpha: f64 },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("linear system solve did not reach required accuracy (relative residual {0:.3e})")]
    SolveAccuracy(f64),

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("invalid matrix market data: {0}")]
    MatrixMarket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
