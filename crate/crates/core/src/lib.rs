//! Desk-scale simulator of binocular resonant-beam localization.
//!
//! The pipeline runs per transmitter: solve the self-reproducing resonator mode
//! ([`resonator`]), turn its round-trip efficiency into steady-state output
//! power ([`power`]), expose the leaked spot on the image sensor ([`sensor`]),
//! centroid it and triangulate the target from both transmitters
//! ([`localization`]). [`harness`] wires this into configurable sweeps.
//!
//! Data-parallel kernels (FFT rows, pixel exposure, Monte Carlo trials, sweep
//! points) go through [`exec`], which runs on rayon when the `parallel` feature
//! is enabled and the runtime switch allows it. Results are bit-identical
//! either way.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constants;
pub mod error;
pub mod exec;
pub mod fft;
pub mod field;
pub mod harness;
pub mod localization;
pub mod optics;
pub mod power;
pub mod resonator;
pub mod sensor;

pub use error::{Error, Result};
pub use field::{GridSpec, SampledField};
