//! Sparse and low-rank convex optimization with iterative hard thresholding and
//! adaptively regularized variants.

pub mod error;
pub mod harness;
pub mod iht;
pub mod instances;
pub mod linops;
pub mod lowrank;
pub mod objectives;
pub mod oracle;
pub mod regiht;
pub mod rng;

pub use error::{Error, Result};
