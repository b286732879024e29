//! File formats, experiment harness and command line for `iwgt-core`.
//!
//! Datasets, checkpoints, configuration and CSV reports live here, together
//! with the parallel evaluation protocols and the sweeps built on them.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
