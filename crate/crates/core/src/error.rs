//! Shared error type for all numerical operations.

use thiserror::Error;

/// Errors surfaced by operator algebra, state construction, and the
/// equilibration/objectivity pipelines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max |A - A^dag| element = {max_deviation:e})")]
    NotHermitian { max_deviation: f64 },

    #[error("operator is not positive semi-definite (min eigenvalue = {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace is not 1 (got {trace})")]
    InvalidTrace { trace: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {dim} exceeds the configured max_dim {max_dim}")]
    DimensionOverflow { dim: usize, max_dim: usize },

    #[error("partial trace requires a non-empty set of kept factors")]
    EmptyKeepSet,

    #[error("invalid rank {rank} for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },

    #[error("invalid dimensions: {reason}")]
    InvalidDims { reason: String },

    #[error("eigensolver failed: {0}")]
    NumericalFailure(String),

    #[error("averaging window must be positive (got {window})")]
    NonPositiveWindow { window: f64 },

    #[error(
        "equal energy gaps detected: E{i1}-E{j1} matches E{i2}-E{j2} within {tolerance:e}"
    )]
    EqualGapsDetected {
        i1: usize,
        j1: usize,
        i2: usize,
        j2: usize,
        tolerance: f64,
    },

    #[error("spectrum still degenerate after {attempts} redraws")]
    DegenerateAfterRetries { attempts: usize },

    #[error(
        "degenerate branch structure: eigenvalues of branches {branch_i} and {branch_j} \
         coincide at levels ({level_m}, {level_n}) with initial-state overlap {overlap:e}"
    )]
    DegenerateBranchStructure {
        branch_i: usize,
        branch_j: usize,
        level_m: usize,
        level_n: usize,
        overlap: f64,
    },

    #[error(
        "resonant eigenvalues: x_{i} eps_{m} = x_{j} eps_{n} within tolerance {tolerance:e}"
    )]
    ResonantEigenvalues {
        i: usize,
        j: usize,
        m: usize,
        n: usize,
        tolerance: f64,
    },

    #[error("state is not block diagonal in the pointer basis (max off-block element = {max_off_block:e})")]
    NotBlockDiagonal { max_off_block: f64 },

    #[error("conditional-state grid incomplete: missing branch {branch} observer {observer}")]
    IncompleteGrid { branch: usize, observer: usize },

    #[error("invalid macro partition: {reason}")]
    InvalidPartition { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
