//! Majorization-minimization reconstruction for linear inverse problems under
//! Poisson and Poisson–Gaussian noise.
//!
//! The crate provides nonnegative forward operators ([`operators`]), seeded
//! measurement simulation ([`simulate`]), the Poisson likelihood and
//! gradient-step regularizers ([`objective`]), the EM tangent majorant with its
//! exact minimizer and closed-form proximal map ([`majorize`]), the MLEM, OSEM,
//! majorized forward-backward and plug-and-play MM solvers with their
//! convergence diagnostics ([`solve`]), and image-quality metrics
//! ([`metrics`]).
//!
//! With the default `parallel` feature, per-pixel and per-bin loops run on
//! rayon; every result is bit-identical to the sequential build.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod majorize;
pub mod metrics;
pub mod objective;
pub mod operators;
pub mod par;
pub mod phantom;
pub mod raster;
pub mod simulate;
pub mod solve;

pub use error::{Error, Result};
pub use raster::{dot, Measurement, Raster, Shape};
