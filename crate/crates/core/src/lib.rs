//! Multi-label training engine with uncertainty-guided mini-batch
//! selection.
//!
//! The crate trains a small fully-connected network on multi-label data
//! while letting a pluggable policy decide which instances form each
//! mini-batch.  The headline policy scores every (instance, label) pair by
//! combining prediction entropy with the fluctuation of recent
//! predictions, reweights those scores through a mutual-information
//! estimate of label correlation, and samples batches from a quantized
//! distribution whose selectivity decays over training.  Classic baselines
//! (uniform random, label-balanced, variance-seeking, recency-entropy) sit
//! behind the same interface, and an experiment harness runs selector
//! grids under stratified cross-validation with CSV output.

// Validation rejects NaN through negated comparisons like `!(v >= 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod correlation;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod selectors;
pub mod synthetic;
pub mod uncertainty;

pub use error::{Error, Result};
