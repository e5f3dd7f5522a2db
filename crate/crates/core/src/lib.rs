//! Least-energy pinwheel states of weakly coupled competitive Schrödinger
//! systems.
//!
//! The numerical kernels are generic over [`scalar::Real`]; the aliases
//! below fix the scalar to `f64`, which is what the command line uses.

pub mod error;
pub mod mesh;
pub mod scalar;
pub mod groups;
pub mod quadrature;
pub mod groundstate;
pub mod energy;
pub mod ansatz;
pub mod precond;
pub mod solver;
pub mod io;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = mesh::Grid<f64>;
pub type Field = mesh::Field<f64>;
pub type Isometry = groups::Isometry<f64>;
pub type SystemState = energy::SystemState<f64>;
pub type EnergyModel = energy::EnergyModel<f64>;
pub type SolveResult = solver::SolveResult<f64>;
pub type ContinuationStep = solver::ContinuationStep<f64>;
