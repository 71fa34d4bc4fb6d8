//! Multimodal 2-D image registration on Haar wavelet sub-bands with Gaussian
//! pyramids, plus the pyramid-only and wavelet-only baselines.

// Negated comparisons are how NaN gets rejected in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod metric;
pub mod optimizer;
pub mod pipeline;
pub mod pyramid;
pub mod transform;
pub mod wavelet;

pub use error::{Error, Result};
