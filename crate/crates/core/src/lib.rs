//! Sparse discrete optimal transport.
//!
//! The fast path ([`dual_solver::solve`]) runs a variance-reduced stochastic
//! ascent on the Kantorovich dual in `O(N_s + N_t)` memory, reads the support
//! of the plan off the nearly tight constraints, and finishes with an exact
//! network simplex restricted to that support. [`exact`] provides the dense
//! ground-truth solver, [`adapt`] a small domain-adaptation trainer built on
//! the solver, and [`morph`] displacement interpolation between 2-D shapes.

pub mod adapt;
pub mod bench;
pub mod dual_solver;
pub mod error;
pub mod exact;
pub mod measures;
pub mod morph;
mod simplex;

pub use dual_solver::{solve, DualPotentials, OTSolution, SolverConfig, StepDecay};
pub use error::{OtError, Result};
pub use exact::{solve_exact, solve_restricted, ExactSolution, Restricted};
pub use measures::{CostOracle, DiscreteMeasure, PointCloud, TransportPlan};
