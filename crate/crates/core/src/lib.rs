//! Fourier-Bessel steerable PCA for stacks of 2D images.
//!
//! Images sampled on a `2L x 2L` grid are expanded in the Fourier-Bessel
//! basis of the unit disk, truncated at `R_kq <= pi L` and `|k| <= 2L`. The covariance of the
//! images together with all their rotations and reflections is block
//! diagonal in the angular frequency `k`, so PCA runs per block. The crate
//! also covers noise-level estimation, component selection, Wiener-type
//! denoising, a traditional pixel-space PCA baseline, synthetic data, image
//! quality metrics, and the binary file formats used by the `fbspca` CLI.

// `!(x > 0.0)` checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bessel;
pub mod cli;
mod binio;
pub mod data_io;
pub mod denoise;
pub mod error;
pub mod expansion;
pub mod grid;
pub mod metrics;
pub mod spectrum;
pub mod whiten;

pub use error::{Error, Result};
