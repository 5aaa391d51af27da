//! Adaptive finite elements for elliptic and parabolic problems with dynamic
//! boundary conditions, written as a bulk–surface saddle-point system.

pub mod adapt;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod timestep;

pub use error::{Error, Result};
