//! Double-weighted pseudo-posterior estimation for Poisson mixed-effects
//! models fitted to informative survey samples.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit seed; file formats, the CLI and the
//! parallel study runner live in the `dwpp` companion crate.
//!
//! Module map:
//! - [`population`]: synthetic finite populations with size-sorted groups.
//! - [`sampling`]: PPS and SRS designs, single- and two-stage.
//! - [`weights`]: unit and group weight construction and normalization.
//! - [`model`]: weighted log pseudo-posterior and its gradient.
//! - [`mcmc`]: adaptive Metropolis-within-Gibbs sampler and summaries.
//! - [`pairwise`]: integrated (MPML) and pair-integrated frequentist baselines.
//! - [`montecarlo`]: replicate loop and bias/MSE aggregation.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod pairwise;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
