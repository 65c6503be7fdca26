//! Core library for the NIRMAL optimizer benchmark: a minimal dense-tensor
//! type, the NIRMAL/Adam/SGD-momentum update rules, a small CNN stack with
//! manual backprop, IDX dataset ingestion, and classification metrics.
//!
//! Everything is deterministic by construction: fixed summation orders,
//! counter-based noise streams, and seeded initialization/shuffling, so a
//! (seed, config) pair fully determines a training trajectory.

pub mod buffer;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nnet;
pub mod optim;

pub use buffer::Buffer;
pub use error::{Error, Result};
