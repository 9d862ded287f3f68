//! Bayesian-regularized neural network training and the surrounding
//! tool-wear experiment toolkit: feature extraction from cutting-test
//! signals, dataset fusion across heterogeneous rigs, mRMR feature ranking,
//! regression metrics and breakage classification.
//!
//! The crate is organized bottom-up:
//!
//! - [`network`]: feedforward nets, transfer functions, gradients, Jacobians
//! - [`bayes`]: evidence-framework hyperparameter re-estimation
//! - [`trainers`]: the training algorithms and the shared epoch loop
//! - [`features`] / [`data`]: signal statistics, scaling, dataset handling
//! - [`metrics`] / [`mrmr`] / [`classify`]: evaluation and ranking
//!
//! Everything numeric is deterministic for a fixed seed and job count; see
//! [`exec`] for the parallelism rules that make that hold.

pub mod bayes;
pub mod classify;
pub mod data;
pub mod error;
pub mod exec;
pub mod features;
pub mod metrics;
pub mod mrmr;
pub mod network;
pub mod synthetic;
pub mod trainers;

pub use error::{Error, Result};
