//! B-capacity of real stable polynomials over matroid base families, with
//! counting and maximization estimates that carry certified intervals.

pub mod capacity;
pub mod error;
pub mod estimate;
pub mod matroid;
mod numeric;
pub mod poly;
pub mod problem;
pub mod reference;
pub mod solver;

pub use capacity::{
    cap, cap_primal, entropy_cap, gurvits_cap, lower_cap, CapacityOptions, CapacityResult, EntropyResult,
    PrimalResult,
};
pub use error::{CapError, Result};
pub use estimate::{a_bound, bound_m, count_estimate, max_estimate, subdet_max, ABound, EstimateInterval, RatioBound};
pub use matroid::{MatroidKind, MatroidSpec, Membership, SelectionPoly};
pub use poly::{DeterminantalSpec, PolyKind, PolynomialOracle, ProductSpec, SparseTerms};
pub use problem::{ProblemFile, ResultDocument, Task};
pub use solver::SolveStatus;
