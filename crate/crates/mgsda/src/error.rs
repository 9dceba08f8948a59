use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected {rows}x{cols} = {} entries, got {len}", rows * cols)]
    BadShape { rows: usize, cols: usize, len: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("group {group} has no observations")]
    EmptyGroup { group: usize },

    #[error("need more observations than groups: n = {n}, groups = {groups}")]
    DegenerateSampleSize { n: usize, groups: usize },

    #[error("label {label} outside 1..={groups}")]
    LabelOutOfRange { label: usize, groups: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("priors must be positive and sum to one")]
    InvalidPriors,

    #[error("correlation {rho} outside the positive-definite range for {structure}")]
    InvalidCorrelation { rho: f64, structure: &'static str },

    #[error("support size must be even, got {s}")]
    OddSupportSize { s: usize },

    #[error("index {index} lies inside the support")]
    IndexInSupport { index: usize },

    #[error("support is empty")]
    EmptySupport,

    #[error("support complement is empty (p = s)")]
    NoComplement,

    #[error("row {row} of the quadratic term has non-positive diagonal {value:.3e}")]
    ZeroDiagonal { row: usize, value: f64 },

    #[error("non-finite input at position {index}")]
    NonFiniteInput { index: usize },

    #[error("a group stayed empty after {retries} label redraws")]
    DegenerateDraw { retries: usize },

    #[error("restricted scatter is singular: {0}")]
    SingularRestrictedScatter(Box<Error>),
}

pub type Result<T> = std::result::Result<T, Error>;
