use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("symmetric eigensolver did not converge")]
    NoConvergence,

    #[error("matrix is singular or too close to singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("matrix is rank deficient: singular value ratio {ratio:e}")]
    RankDeficient { ratio: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("alpha must be a positive finite real, got {0}")]
    InvalidAlpha(f64),

    #[error("brute-force Procrustes search supports n <= 4, got n = {0}")]
    DimensionTooLarge(usize),

    #[error("shifted eigenvalue at index {index} is not positive ({value:e})")]
    NonPositiveShiftedEigenvalue { index: usize, value: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("trace budget {budget} is infeasible for dimension {dim}")]
    InfeasibleBudget { budget: usize, dim: usize },

    #[error("no feasible ascent step found at the initial point")]
    NoAscent,

    #[error("Cholesky factorization of the Nystrom core failed after {attempts} shift escalations")]
    CholeskyFailure { attempts: usize },

    #[error("sketch size M = {m} must exceed rank K + 1 = {}", .k + 1)]
    InvalidSketchSize { k: usize, m: usize },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid torus parameters: {0}")]
    InvalidParams(String),

    #[error("scale factor must lie in (0, 1], got {0}")]
    InvalidScale(f64),

    #[error("point cloud is degenerate: {0}")]
    DegenerateCloud(String),

    #[error("kernel bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("separation loss needs at least one same-group and one cross-group pair")]
    InsufficientPairs,

    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
