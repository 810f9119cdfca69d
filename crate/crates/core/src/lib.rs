//! Green measures, potentials and renormalized time-changed limits for
//! compound Poisson processes with symmetric jump kernels.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: jump kernels, their Fourier symbols, small-frequency fits
//!   and convolution powers on periodic grids.
//! - [`green`]: the jump generator, its semigroup, the regular Green kernel
//!   (series and Fourier routes) and potentials.
//! - [`simulate`]: exact compound Poisson paths and Monte Carlo estimators.
//! - [`subordinate`]: subordinators, inverse subordinators, the densities of
//!   `D(t)` and the generalized fractional derivative.
//! - [`renorm`]: subordination, time-changed expectations and renormalized
//!   Green measure curves.
//! - [`experiments`]: JSON-configured experiment runner used by the CLI.

pub mod error;
pub mod experiments;
pub mod green;
pub mod grid;
pub mod kernels;
pub mod laplace;
pub mod quad;
pub mod renorm;
pub mod simulate;
pub mod special;
pub mod subordinate;

pub use error::{Error, Result};
pub use grid::{FieldGrid, GridSpec};
pub use kernels::JumpKernel;
