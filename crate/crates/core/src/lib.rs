//! Wildfire burn-duration regression from landscape feature rasters.
//!
//! The crate covers the whole pipeline: fire records and per-fire raster
//! stacks ([`data`]), raster preprocessing into tabular samples or image
//! tensors ([`preprocess`]), tree ensembles and nearest neighbours
//! ([`tabular`]), a small convolutional network engine ([`nn`]), the
//! duration-specific metrics ([`evaluation`]) and exhaustive hyperparameter
//! search ([`tuning`]). [`pipeline`] glues these together for the CLI.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod tabular;
pub mod tuning;

mod fsutil;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
