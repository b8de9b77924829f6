//! Gumbel-max text watermarking: keyed generation, pivotal statistics,
//! detection tests, calibration, edit simulation and the synthetic
//! experiment harness.

// Published coefficient tables are kept digit for digit; `!(x > 0.0)` is
// the NaN-rejecting guard used throughout.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod detectors;
pub mod edits;
pub mod efficiency;
pub mod error;
pub mod experiments;
pub mod pivotal;
pub mod prf;
pub mod quadrature;
pub mod rng;
pub mod tokensource;
pub mod watermark;

pub use error::{Error, Result};
