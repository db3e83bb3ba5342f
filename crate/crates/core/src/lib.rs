//! Backward-Euler solver for a chemotaxis–Navier–Stokes system with
//! potential-type oxygen consumption on a staggered (MAC) box grid.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch;
// index loops mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod fluid;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod stepper;
pub mod studies;
mod separable;
pub mod truncation;
pub mod verify;

pub use error::{Error, Result, SolveError};
pub use grid::{FaceVectorField, Grid, ScalarField};
pub use params::SimParams;
pub use truncation::TruncParams;

#[cfg(test)]
pub(crate) mod testutil;
