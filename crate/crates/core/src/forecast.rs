//! Validated raw ensemble forecasts.
//!
//! One forecast is the 52-member ensemble for a single station, valid date
//! and lead time: 50 exchangeable perturbed members, the unperturbed control
//! run and the separate high-resolution run. All members forecast total
//! cloud cover as a fraction in [0, 1]. An optional ensemble-mean
//! precipitation value rides along for the precipitation-extended feature
//! set.

use chrono::NaiveDate;

use crate::error::Error;
use crate::okta::{self, N_CLASSES};
use crate::pmf::Pmf;
use crate::Result;

/// Number of exchangeable perturbed members.
pub const N_EXCHANGEABLE: usize = 50;

/// Total member count: exchangeable members plus control plus high-res.
pub const N_MEMBERS: usize = 52;

/// Station identifier. Ordered and hashable so tables and maps keyed by
/// station come out in a deterministic order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationId(pub String);

impl std::fmt::Display for StationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StationId {
    fn from(s: &str) -> Self {
        StationId(s.to_owned())
    }
}

/// One validated ensemble forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    station: StationId,
    date: NaiveDate,
    lead_time: u8,
    members: [f64; N_EXCHANGEABLE],
    ctrl: f64,
    hres: f64,
    precip_mean: Option<f64>,
}

impl EnsembleForecast {
    /// Validates and builds a forecast.
    ///
    /// Every cloud-cover member must be a finite fraction in [0, 1], the
    /// lead time must be at least one day, and a precipitation mean, when
    /// present, must be finite and nonnegative.
    pub fn new(
        station: StationId,
        date: NaiveDate,
        lead_time: u8,
        members: [f64; N_EXCHANGEABLE],
        ctrl: f64,
        hres: f64,
        precip_mean: Option<f64>,
    ) -> Result<EnsembleForecast> {
        if lead_time == 0 {
            return Err(Error::OutOfRange {
                what: "lead time",
                value: 0.0,
            });
        }
        for &m in members.iter().chain([&ctrl, &hres]) {
            if !m.is_finite() {
                return Err(Error::NonFinite("ensemble member"));
            }
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::OutOfRange {
                    what: "ensemble member",
                    value: m,
                });
            }
        }
        if let Some(p) = precip_mean {
            if !p.is_finite() {
                return Err(Error::NonFinite("precipitation mean"));
            }
            if p < 0.0 {
                return Err(Error::OutOfRange {
                    what: "precipitation mean",
                    value: p,
                });
            }
        }
        Ok(EnsembleForecast {
            station,
            date,
            lead_time,
            members,
            ctrl,
            hres,
            precip_mean,
        })
    }

    pub fn station(&self) -> &StationId {
        &self.station
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn lead_time(&self) -> u8 {
        self.lead_time
    }

    /// The 50 exchangeable members.
    pub fn members(&self) -> &[f64; N_EXCHANGEABLE] {
        &self.members
    }

    pub fn ctrl(&self) -> f64 {
        self.ctrl
    }

    pub fn hres(&self) -> f64 {
        self.hres
    }

    pub fn precip_mean(&self) -> Option<f64> {
        self.precip_mean
    }

    /// All 52 members: the exchangeable ones, then control, then high-res.
    pub fn all_members(&self) -> impl Iterator<Item = f64> + '_ {
        self.members
            .iter()
            .copied()
            .chain([self.ctrl, self.hres])
    }

    /// The raw-ensemble predictive distribution: every member quantized to
    /// its okta class and given equal weight 1/52. The control and high-res
    /// runs count exactly like the exchangeable members.
    pub fn raw_pmf(&self) -> Pmf {
        let mut counts = [0.0f64; N_CLASSES];
        for m in self.all_members() {
            let okta = okta::quantize(m).expect("members validated on construction");
            counts[okta.index()] += 1.0;
        }
        Pmf::from_weights(&counts).expect("52 unit counts cannot be all zero")
    }
}
