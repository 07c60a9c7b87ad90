//! Score-based generative modeling numerics without the standard library.
//!
//! The crate covers the Ornstein–Uhlenbeck schedule, analytic targets, the
//! regularized kernel score estimator, reverse-SDE sampling, divergence
//! metrics, a small trainable MLP, and a compiler for constructive ReLU
//! networks with certified width, depth and sup-norm error.
//!
//! Everything here needs only `alloc`. File formats, configuration and the
//! command line live in the companion `scoregen` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod field;
pub mod kde;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod relu;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod targets;

pub use error::{Error, Result};
pub use schedule::DiffusionSchedule;
