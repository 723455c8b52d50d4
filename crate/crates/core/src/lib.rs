//! Simulator for class-incremental learning with repetition.
//!
//! * [`stream`] generates streams from four control parameters.
//! * [`nn`] is the small training core (MLP, losses, SGD, augmentation).
//! * [`strategy`] holds the ensemble strategies and the reference baselines.
//! * [`harness`] runs experiments, aggregates metrics and draws plots.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod strategy;
pub mod stream;

pub use error::{Error, Result};
