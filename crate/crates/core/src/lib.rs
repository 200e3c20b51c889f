//! Statistically validated lead-lag and synchronous correlation networks
//! from intraday prices.

pub mod analytic;
pub mod corr;
pub mod epps;
pub mod error;
pub mod ingest;
pub mod permengine;
pub mod pipeline;
pub mod returns;
pub mod special;
pub mod synth;
pub mod topology;
pub mod validate;

pub use error::{Error, Result};
