//! Implicit weighted-Galerkin finite element scheme for the Korteweg–de
//! Vries equation `u_t + u u_x + u_xxx = 0` with periodic `C¹` cubic
//! Hermite splines.
//!
//! The pieces, bottom up:
//!
//! - [`quadrature`]: Gauss–Legendre rules and the cell loop.
//! - [`spline`]: the spline space, point evaluation and `L²` projection.
//! - [`weight`]: the weight `φ` and the constant `C_R`.
//! - [`linalg`]: periodic band storage and its direct solver.
//! - [`assembly`]: weighted mass, dispersion and convection operators.
//! - [`solver`]: the fixed-point implicit Euler step and time marching.
//! - [`analytic`]: one- and two-soliton solutions, rough initial data.
//! - [`diagnostics`]: norms, error metric, rates, local `H¹` quantity.
//! - [`experiments`]: benchmark drivers and their output files.

pub mod analytic;
pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod quadrature;
pub mod selftest;
pub mod solver;
pub mod spline;
pub mod weight;

pub use error::{Error, Result};
pub use spline::{SplineFunction, SplineSpace};
pub use weight::WeightFunction;
