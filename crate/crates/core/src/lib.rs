//! Mean-field frozen percolation on k-type inhomogeneous random graphs.
//!
//! The crate bundles three views of the same process:
//!
//! * [`fpsim`]: an exact event-driven Monte Carlo simulator of the finite-N
//!   process (edge arrivals at rate `1/N` per alive pair, whole components
//!   frozen at rate `lambda(N) * |C|`);
//! * [`typeflow`] and [`smol`]: deterministic solvers for the limiting
//!   type-flow ODE (driven by Perron-Frobenius eigenvectors) and for the
//!   multiplicative-kernel Smoluchowski coagulation equations;
//! * [`branching`]: the multitype Poisson Galton-Watson trees that link the
//!   two, with exact total-progeny laws.
//!
//! [`harness`] ties them together into reproducible experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod branching;
pub mod error;
pub mod fpsim;
pub mod harness;
pub mod kernel;
pub mod perron;
pub mod rng;
pub mod smol;
pub mod typeflow;

pub use error::{Error, Result};
pub use kernel::{Kernel, SquareMatrix, TypeMass};
pub use perron::PerronPair;
