//! Numerical laboratory for linear KdV-type equations
//! `∂t u + a3 ∂x³u + a2 ∂x²u + a1 ∂x u + a0 u = f` with variable coefficients.
//!
//! The crate provides a periodic finite-difference discretization, a
//! Crank–Nicolson time stepper, the gauge and energy identities behind the
//! weighted `L²` estimates, the change of variables to constant dispersion,
//! and geometric-optics wave packets for probing forward ill-posedness.

pub mod banded;
pub mod coefficients;
pub mod energy;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod solver;
pub mod transform;
pub mod wavepacket;

pub use coefficients::{Coefficient, CoefficientSet, ProfileSpec, Window};
pub use error::{Error, Result};
pub use grid::{Field, SpatialGrid};
