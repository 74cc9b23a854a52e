//! Sharp bounds and debiased estimators for the probability of tiered benefit.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod normal;
pub mod nuisance;
pub mod partition;
pub mod quadrature;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
