//! Lack-of-fit diagnostics for ordinary differential equation models.
//!
//! The crate estimates a time-varying forcing function `g(t)` that absorbs the
//! discrepancy between an ODE model and smoothed data, then runs nested
//! residual-bootstrap / block-permutation tests to decide whether that
//! discrepancy is
//!
//! 1. exogenous noise unrelated to the state,
//! 2. a function of the modelled state (a misspecified rate function), or
//! 3. dependent on its own past (missing state variables).
//!
//! Everything here is `no_std` + `alloc`; file formats, the parallel runner
//! and the command-line interface live in the `lackfit` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnose;
pub mod dynsys;
mod error;
pub mod estimate;
pub(crate) mod linalg;
pub mod rng;
pub mod splines;

pub use error::{Error, Result};
