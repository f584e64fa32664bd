//! PLS path modeling for auditing multi-task evaluation benchmarks.
//!
//! A benchmark is a table of model × task scores plus a taxonomy that groups
//! tasks into latent capability constructs. This crate estimates the
//! constructs with the PLS fixed-point iteration, computes reliability,
//! discriminant-validity and redundancy diagnostics, prunes redundant or
//! weak tasks, and compares model rankings.

pub mod error;
pub mod diagnostics;
pub mod estimator;
pub mod model;
pub mod numerics;
pub mod par;
pub mod pruner;
pub mod rank_analysis;
pub mod report;
pub mod simulator;

#[cfg(test)]
mod testutil;

pub use error::{Error, ErrorKind, Result};
