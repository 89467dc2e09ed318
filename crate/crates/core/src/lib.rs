//! Numerical laboratory for time-dependent inverse transport.
//!
//! The crate evaluates the explicit kernels of the albedo operator of the
//! linear Boltzmann equation on convex domains, simulates boundary
//! measurements, reconstructs the coefficients from them and checks the
//! stability inequalities relating coefficient differences to operator
//! differences.

pub mod coefficients;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod inversion;
pub mod kernels;
pub mod quadrature;
pub mod stability;

pub use error::{Error, Result};
