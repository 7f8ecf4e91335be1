//! Statistical post-processing of ensemble cloud-cover forecasts.
//!
//! Total cloud cover is reported on the nine-value okta scale. This crate
//! turns a raw 52-member ensemble (50 exchangeable members, the control run
//! and the high-resolution run) into a calibrated predictive distribution
//! over the nine okta classes, and verifies the result.
//!
//! The pieces, bottom to top:
//!
//! * [`okta`], [`pmf`], [`forecast`]: the discrete okta scale, predictive
//!   distributions over it, and validated raw ensembles.
//! * [`features`]: the fixed covariate set extracted from each ensemble
//!   (member statistics, point-mass counts, a spread/shift interaction).
//! * [`models`]: five classifiers producing okta distributions:
//!   multinomial logistic regression, proportional-odds logistic
//!   regression, a small multilayer perceptron, random forests and
//!   gradient-boosted trees.
//! * [`verify`]: discrete CRPS and the logarithmic score, skill scores,
//!   randomized PIT histograms, Diebold-Mariano tests with
//!   Benjamini-Hochberg multiplicity control, and stationary block
//!   bootstrap confidence intervals.
//! * [`data`]: dataset loading/saving and a synthetic-data generator with
//!   controllable miscalibration.
//! * [`pipeline`]: rolling-window training schemes, per-window model
//!   selection for the tree ensembles, and the experiment driver that
//!   scores every (station, lead time, method) combination.
//! * [`report`], [`tables`]: cross-station aggregation (skill scores,
//!   pairwise test matrices, pooled PIT histograms) and the delimited
//!   text formats everything is written in.
//!
//! The command-line front end lives in a separate binary crate.

pub mod data;
pub mod error;
pub mod features;
pub mod forecast;
pub mod models;
pub mod okta;
pub mod optim;
pub mod pipeline;
pub mod pmf;
pub mod report;
pub mod tables;
pub mod verify;

pub use error::Error;
pub use forecast::EnsembleForecast;
pub use okta::Okta;
pub use pmf::Pmf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
