use thiserror::Error;

pub type Result<T> = std::result::Result<T, CapError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {index} must be strictly positive (got {value})")]
    NonPositiveCoordinate { index: usize, value: f64 },

    #[error("coordinate {index} must be nonnegative (got {value})")]
    NegativeCoordinate { index: usize, value: f64 },

    #[error("variable index {index} out of range for {m} variables")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("invalid matroid: {0}")]
    InvalidMatroid(String),

    #[error("polynomial is not homogeneous: {0}")]
    NotHomogeneous(String),

    #[error("polynomial degree {degree} does not match matroid rank {rank}")]
    DegreeRankMismatch { degree: usize, rank: usize },

    #[error("interpolation system is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("family has no bases")]
    EmptyFamily,

    #[error("enumeration limit {limit} exceeded after {found} sets")]
    EnumerationLimit { limit: usize, found: usize },

    #[error("no certified selection: {0}")]
    UnsupportedSelection(String),

    #[error("not a linear representation: base determinant {det:.3e} is below tolerance")]
    DegenerateRepresentation { det: f64 },

    #[error("polynomial must be asserted real stable for this estimate")]
    NotRealStable,

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}
