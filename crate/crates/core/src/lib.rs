//! Gradient boosting of the Riesz representer for linear causal functionals,
//! debiased estimation, and a simulation harness.

pub mod boost;
pub mod config;
pub mod data;
pub mod error;
pub mod estimate;
pub mod matrix;
pub mod nuisance;
pub mod riesz;
pub mod sim;
pub mod tuning;

pub use error::{Error, Result};
