//! Automated curriculum learning: a nonstationary bandit picks which task a
//! small LSTM trains on next, rewarded by measured learning progress.

pub mod bandit;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod scaler;
pub mod signals;
pub mod tasks;
pub mod variational;

pub use error::{Error, Result};
