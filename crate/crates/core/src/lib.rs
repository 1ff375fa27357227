//! Liveability simulation: dataset handling, random-forest scoring, action
//! simulation, multi-objective planners and their quality metrics.

pub mod analysis;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod forest;
pub mod metrics;
pub mod moo;
pub mod par;
pub mod preprocess;
pub mod simcore;

pub use error::{Error, Result};
