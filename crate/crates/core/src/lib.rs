//! Deterministic simulator for federated learning with anonymous random
//! hybridization (FeARH).
//!
//! Data owners train local copies of a small dense network, swap a random
//! fraction of parameter positions with a randomly chosen partner, and hand
//! the hybridized vectors to an analyzer that forms a data-weighted average.
//! The crate also implements the two baselines the hybrid scheme is compared
//! against: centralized training and plain federated averaging.
//!
//! Module map:
//!
//! * [`model`] - dense network / logistic regression, backprop, Glorot init
//! * [`optim`] - Nadam optimizer and local mini-batch training
//! * [`metrics`] - AUCROC, average precision, cross-silo means
//! * [`data`] - synthetic generator, CSV loading, splitting, silo partitioning
//! * [`protocol`] - pairing, positional swaps, weighted averaging
//! * [`orchestrator`] - the three training regimes, halting, sweeps
//! * [`rng`] - keyed pseudorandom streams

pub mod benchmark;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod orchestrator;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
