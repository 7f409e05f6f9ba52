//! Invariant representation learning via distribution matching.
//!
//! The core idea: instead of penalizing every pairwise distributional distance
//! between per-domain latent batches, draw two random cross-domain mixtures at
//! each optimization step and penalize a single distance between them. The
//! crate provides the differentiable network core, the MMD and CORAL
//! distances, both penalty variants, a synthetic structural-causal-model
//! benchmark, loaders for the UCI Adult and German Credit datasets, and the
//! training/evaluation harness that measures the invariance/accuracy
//! trade-off.
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability, and the `causirl` binary for dataset acquisition, sweeps and
//! reports.

pub mod config;
pub mod diffnet;
pub mod distances;
pub mod error;
pub mod fetch;
pub mod harness;
pub mod optim;
pub mod penalties;
pub mod report;
pub mod rng;
pub mod scm;
pub mod tabular;

pub use error::{Error, Result};
