//! Theory-guided demand inference for shared bottleneck links.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kernel;
pub mod par;
pub mod regimegen;
pub mod rng;
pub mod theory;
pub mod trace;
pub mod training;

pub use error::{Error, Result};
