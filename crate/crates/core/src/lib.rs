//! Reference-state re-optimization for linear control systems whose
//! operational region changes abruptly.
//!
//! Given the plant state `xp` at the moment the region changes, [`orsop::solve`]
//! picks a new reference inside the reference-feasible polytope whose Lyapunov
//! ellipsoid through `xp` fits the new operational region, minimizing its
//! volume.

pub mod barrier;
pub mod error;
pub mod geometry;
pub mod kkt;
pub mod lp;
pub mod lyapunov;
pub mod oracle;
pub mod orsop;
pub mod whitening;

pub use barrier::{newton_solve, BarrierProblem, NewtonConfig, NewtonOutcome, NewtonStatus};
pub use error::{Error, Result};
pub use geometry::{FeasibilityReport, HalfSpace, Polytope, RegionKind, StateVector, DEFAULT_TOL};
pub use lyapunov::{solve_lyapunov, Ellipsoid, PlantModel, SpdMatrix};
