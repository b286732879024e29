//! Interference-aware graph transformer for wireless power control.
//!
//! This crate is the pure algorithmic core: network simulation, interference
//! graph construction, utilities, classical baselines (WMMSE, brute force), a
//! small reverse-mode tensor engine, the bias-injected graph transformer, hybrid
//! self-supervised pre-training and utility-driven fine-tuning. It needs only
//! `alloc`; file formats, parallelism and the command line live in the `iwgt`
//! companion crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channelsim;
pub mod error;
pub mod eval;
mod math;
pub mod model;
pub mod netgraph;
pub mod objectives;
pub mod scenarios;
pub mod solvers;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
