//! Reproducible pipeline for classifying synthetic distributed acoustic
//! sensing (DAS) patches: signal synthesis, a from-scratch residual network,
//! synchronous data-parallel training with throughput metering, an analytic
//! scaling model, hyperparameter sweeps, and range-based model selection.

pub mod error;
pub mod nn;
pub mod report;
pub mod resnet;
pub mod rng;
pub mod selection;
pub mod sweep;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
