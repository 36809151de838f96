//! Corrects gridded radar rainfall with binary windshield-wiper observations
//! using a per-cell sequential importance resampling particle filter, and
//! scores the corrected field with ROC / confusion-matrix metrics.
//!
//! Module map:
//! - [`model`]: grids, fields, observations, time bins
//! - [`kernel`]: distance-dependent detection probability
//! - [`sensor`]: wiper likelihood and injection intensity histograms
//! - [`particle`]: particle sets, reweighting, systematic resampling
//! - [`fusion`]: radar prior, per-bin assimilation, temporal chaining
//! - [`ingest`]: radial scans, vehicle traces, gages, labels
//! - [`storm`]: synthetic storms, degraded radar and vehicle fleets
//! - [`eval`]: confusion counts, ROC/AUC, leave-one-out validation
//! - [`io`]: field files, run configuration and checksums

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod io;
pub mod kernel;
pub mod model;
pub mod particle;
pub mod rng;
pub mod sensor;
pub mod storm;

pub use error::{Error, Result};

/// Crate version, stamped into output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
