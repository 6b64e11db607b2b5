//! Attention-state analytics for experience-sampling notification studies.
//!
//! The crate covers the whole pipeline: loading and validating ESM records,
//! encoding them as feature vectors, training random forests and gradient
//! boosted trees, cold-start (leave-one-user-out) evaluation protocols, the
//! statistical battery (chi-square, Cohen's kappa, descriptive tables and a
//! random-intercept mixed model) and a seeded synthetic data generator.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trees;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
