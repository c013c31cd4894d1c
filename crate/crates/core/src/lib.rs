//! Band functions of Iwatsuka magnetic Hamiltonians.
//!
//! The 2D operator with field `b(x)` fibers, after a Fourier transform in `y`,
//! into the 1D operators `h(k) = -∂x² + (a(x) - k)²` with `a' = b`. This crate
//! computes their eigenvalues `E_n(k)` (the band functions), compares them
//! with threshold asymptotics, and derives the band-level current bounds.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod fiber;
pub mod field;
pub mod fit;
pub mod format;
pub mod hermite;
pub mod quadrature;
pub mod selftest;
pub mod sweep;
pub mod transport;
pub mod tridiag;

pub use error::{Error, Result};
pub use fiber::{BandEstimate, FiberEigenpair, FiberSolver, Grid, SolverOptions};
pub use field::{FieldKind, FieldProfile};
