//! Multilevel Monte Carlo training of conditional density estimators for
//! simulation-based inference.

pub mod allocation;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod mdn;
pub mod reference;
pub mod report;
pub mod rng;
pub mod simulators;
pub mod special;
pub mod train;

pub use error::{Error, Result};
