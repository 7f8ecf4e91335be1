//! Probabilistic verification of okta forecasts.
//!
//! Scores are proper for the discrete predictive distributions produced by
//! the models: the continuous ranked probability score evaluated on the
//! nine-point okta support and the logarithmic score. On top of the raw
//! scores sit skill scores against a reference method, randomized PIT
//! histograms for calibration checks, Diebold-Mariano tests for pairwise
//! score differences (with Benjamini-Hochberg control across stations) and
//! stationary block bootstrap confidence intervals for score means.

pub mod bootstrap;
pub mod dm;
pub mod fdr;
pub mod pit;
pub mod scores;

pub use bootstrap::{bootstrap_ci, resample_indices, Ci};
pub use dm::{dm_test, TestResult};
pub use fdr::benjamini_hochberg;
pub use pit::{chi_square_uniform, pit_histogram, pit_value};
pub use scores::{crps, floor_pmf, log_score, p_min, skill_score};

use std::fmt;

use chrono::NaiveDate;

use crate::error::Error;
use crate::forecast::StationId;
use crate::Result;

/// Which proper score a series holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreKind {
    Crps,
    LogS,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 2] = [ScoreKind::Crps, ScoreKind::LogS];

    pub fn id(self) -> &'static str {
        match self {
            ScoreKind::Crps => "crps",
            ScoreKind::LogS => "logs",
        }
    }

    pub fn from_id(id: &str) -> Result<ScoreKind> {
        match id {
            "crps" => Ok(ScoreKind::Crps),
            "logs" => Ok(ScoreKind::LogS),
            other => Err(Error::config(format!("unknown score kind {other:?}"))),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// What a score series measures; everything but the method. Two series
/// are comparable only when their keys and date grids agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesKey {
    pub station: StationId,
    pub lead_time: u8,
    pub kind: ScoreKind,
}

/// A daily score series of one method under one [`SeriesKey`].
///
/// Dates are strictly increasing and values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    key: SeriesKey,
    method: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(
        key: SeriesKey,
        method: impl Into<String>,
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
    ) -> Result<ScoreSeries> {
        if dates.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "score series",
                expected: dates.len(),
                got: values.len(),
            });
        }
        if dates.is_empty() {
            return Err(Error::EmptyTrainingSet("score series"));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("score series dates must strictly increase"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score series value"));
        }
        Ok(ScoreSeries {
            key,
            method: method.into(),
            dates,
            values,
        })
    }

    pub fn key(&self) -> &SeriesKey {
        &self.key
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-emptiness is a construction invariant
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Checks comparability: same key (station, lead time, score kind)
    /// and exactly the same dates. Methods may differ; that is the point
    /// of a comparison.
    pub fn check_comparable(&self, other: &ScoreSeries) -> Result<()> {
        if self.key != other.key {
            return Err(Error::IncomparableSeries(format!(
                "keys differ: {:?} vs {:?}",
                self.key, other.key
            )));
        }
        if self.dates != other.dates {
            return Err(Error::IncomparableSeries(format!(
                "date grids differ ({} vs {} days)",
                self.dates.len(),
                other.dates.len()
            )));
        }
        Ok(())
    }
}
