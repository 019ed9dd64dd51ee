//! Pitch control measurement from inferred intended targets.
//!
//! A pitcher's location tendencies in a covariate bin (pitcher, season, pitch
//! type, batter hand and optionally count) are modelled as a bivariate Gaussian
//! mixture whose components are the pitcher's targets. Each pitch is scored by
//! the posterior-weighted distance from where it crossed the plate to the
//! component centres (xCTRL, inches, lower is better).
//!
//! Modules:
//! - [`ingest`]: CSV parsing, covariate binning and the IQR outlier mask.
//! - [`gmm`]: bivariate Gaussian mixtures fit by (optionally weighted) EM and
//!   selection of the component count on held-out data.
//! - [`intent`]: per-pitch posterior intent, xCTRL scores, bin aggregates,
//!   rankings and density grids.
//! - [`bootstrap`]: percentile intervals over pitch resamples.
//! - [`shrinkage`]: count-specific densities shrunk toward the count-agnostic
//!   fit with downweighted synthetic draws.
//! - [`sim`]: inning simulation relating execution noise to runs allowed.

pub mod bootstrap;
pub mod error;
pub mod gmm;
pub mod ingest;
pub mod intent;
pub mod seed;
pub mod shrinkage;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A location on the strike-zone plane, inches.
pub type Point = (f64, f64);
