//! Penalty-kick direction prediction from clip-embedding sequences.
//!
//! Two selective state-space encoders (run-up and kick phase) pool their
//! outputs with learned attention, a small MLP embeds the binary metadata,
//! and a fusion MLP classifies the concatenation into left/center/right
//! (or left/right). The crate also carries the full training and
//! cross-validation harness plus a synthetic data generator for testing.

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ssm;
pub mod temporal;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
