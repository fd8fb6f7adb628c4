//! Quantization-based filtering of a partially observed firm value, with
//! default probabilities and credit derivative prices built on top.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod config;
pub mod credit;
pub mod error;
pub mod filter;
pub mod kernels;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod quantizer;

pub use error::{Error, Result};
