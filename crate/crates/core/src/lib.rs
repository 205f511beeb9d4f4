//! Sparse sensor-subarray selection for direction-of-arrival estimation.
//!
//! Subarrays are labeled by their single-source Cramér–Rao bound, a small
//! convolutional classifier learns to map a full-array covariance to the best
//! subarray, and the classifier is transferred between array geometries by
//! freezing its convolutional layers and fine-tuning the rest.
//!
//! Batch work (candidate scoring, data generation, Monte Carlo trials, grid
//! scans, mini-batch gradients) runs on rayon when the default `parallel`
//! feature is enabled and sequentially otherwise; results are identical in
//! both modes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crb;
pub mod dataset;
pub mod doa;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod selection;
pub mod signal;

pub use error::{Error, Result};
pub use exec::Execution;
