//! Pointwise p-capacity solver and verification harness.

// `!(x > 0.0)` is the NaN-rejecting guard; indexed loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod error;
pub mod geometry;
pub mod infinity;
pub mod linalg;
pub mod mesh;
pub mod oracles;
pub mod properties;
pub mod tolerances;

pub use capacity::{solve_capacity, PoleProblem, SolveResult, SolverOptions};
pub use error::{Error, Result};
pub use geometry::{Domain, Point};
pub use infinity::{solve_infinity_harmonic, InfinityField, InfinityProblem};
pub use mesh::{Mesh, MeshParams, ScalarField};
