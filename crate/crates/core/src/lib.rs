//! Explanation engine for an additive risk model: risk scores, per-case
//! factor contributions, what-if rescoring, similar cases, global importance
//! and per-score factor distributions.

pub mod cli;
pub mod dataio;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod explain;
pub mod model;
pub mod neighbors;
pub mod present;
pub mod service;
pub mod stats;
pub mod whatif;

pub use engine::{Engine, EngineConfig};
pub use error::{Error, Result};
