//! Covariates extracted from a raw ensemble.
//!
//! Every classifier sees the same engineered summary of the 52 members
//! rather than the members themselves:
//!
//! * `ens_mean`: mean of the 50 exchangeable members,
//! * `ctrl`, `hres`: the control and high-resolution runs,
//! * `variance`: sample variance of all 52 members (divisor 51),
//! * `p_zero`, `p_one`: fraction of the 52 members exactly equal to 0
//!   and exactly equal to 1 (okta point masses carry real signal),
//! * `interaction`: variance times the signed square of the mean forecast
//!   shift away from half cover,
//! * `precip_mean`: optional ensemble-mean precipitation.
//!
//! Three variants of the vector are in use: the six-feature set for plain
//! multinomial regression (drops the interaction), the seven-feature set
//! for everything else, and the eight-feature set appending precipitation.

use crate::error::Error;
use crate::forecast::{EnsembleForecast, N_EXCHANGEABLE, N_MEMBERS};
use crate::Result;

/// Which subset of the engineered features a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureVariant {
    /// `ens_mean, ctrl, hres, variance, p_zero, p_one`
    Mlr6,
    /// The six above plus `interaction`.
    Full7,
    /// The seven above plus `precip_mean`.
    Extended8,
}

impl FeatureVariant {
    /// Number of covariates in this variant.
    pub fn dim(self) -> usize {
        match self {
            FeatureVariant::Mlr6 => 6,
            FeatureVariant::Full7 => 7,
            FeatureVariant::Extended8 => 8,
        }
    }

    /// Covariate names in vector order.
    pub fn names(self) -> &'static [&'static str] {
        const NAMES: [&str; 8] = [
            "ens_mean",
            "ctrl",
            "hres",
            "variance",
            "p_zero",
            "p_one",
            "interaction",
            "precip_mean",
        ];
        match self {
            FeatureVariant::Mlr6 => &NAMES[..6],
            FeatureVariant::Full7 => &NAMES[..7],
            FeatureVariant::Extended8 => &NAMES,
        }
    }

    /// Stable lowercase identifier used in model records.
    pub fn id(self) -> &'static str {
        match self {
            FeatureVariant::Mlr6 => "mlr6",
            FeatureVariant::Full7 => "full7",
            FeatureVariant::Extended8 => "extended8",
        }
    }

    /// Inverse of [`FeatureVariant::id`].
    pub fn from_id(id: &str) -> Result<FeatureVariant> {
        match id {
            "mlr6" => Ok(FeatureVariant::Mlr6),
            "full7" => Ok(FeatureVariant::Full7),
            "extended8" => Ok(FeatureVariant::Extended8),
            other => Err(Error::config(format!("unknown feature variant {other:?}"))),
        }
    }
}

/// The full set of engineered covariates for one forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub ens_mean: f64,
    pub ctrl: f64,
    pub hres: f64,
    pub variance: f64,
    pub p_zero: f64,
    pub p_one: f64,
    pub interaction: f64,
    pub precip_mean: Option<f64>,
}

impl FeatureVector {
    /// Flattens into the covariate vector of the requested variant.
    ///
    /// Fails with a missing-covariate error when the eight-feature variant
    /// is requested but the forecast carried no precipitation.
    pub fn to_vec(&self, variant: FeatureVariant) -> Result<Vec<f64>> {
        let mut out = vec![
            self.ens_mean,
            self.ctrl,
            self.hres,
            self.variance,
            self.p_zero,
            self.p_one,
        ];
        match variant {
            FeatureVariant::Mlr6 => {}
            FeatureVariant::Full7 => out.push(self.interaction),
            FeatureVariant::Extended8 => {
                out.push(self.interaction);
                out.push(
                    self.precip_mean
                        .ok_or(Error::MissingCovariate("precip_mean"))?,
                );
            }
        }
        Ok(out)
    }
}

/// Computes all engineered covariates from one forecast.
pub fn extract_features(forecast: &EnsembleForecast) -> FeatureVector {
    let ens_sum: f64 = forecast.members().iter().sum();
    let ens_mean = ens_sum / N_EXCHANGEABLE as f64;

    let total_sum = ens_sum + forecast.ctrl() + forecast.hres();
    let full_mean = total_sum / N_MEMBERS as f64;

    let mut ss = 0.0;
    let mut n_zero = 0usize;
    let mut n_one = 0usize;
    for m in forecast.all_members() {
        let d = m - full_mean;
        ss += d * d;
        // Exact comparison is intentional: the okta point masses at clear
        // sky and full cover are produced as exact 0.0 and 1.0 upstream.
        if m == 0.0 {
            n_zero += 1;
        }
        if m == 1.0 {
            n_one += 1;
        }
    }
    let variance = ss / (N_MEMBERS - 1) as f64;
    let p_zero = n_zero as f64 / N_MEMBERS as f64;
    let p_one = n_one as f64 / N_MEMBERS as f64;

    let shift =
        ((forecast.hres() - 0.5) + (forecast.ctrl() - 0.5) + (ens_mean - 0.5)) / 3.0;
    // shift * shift.abs() is the signed square; it vanishes with shift, so
    // no explicit sign() branch is needed at shift == 0.
    let interaction = variance * shift * shift.abs();

    FeatureVector {
        ens_mean,
        ctrl: forecast.ctrl(),
        hres: forecast.hres(),
        variance,
        p_zero,
        p_one,
        interaction,
        precip_mean: forecast.precip_mean(),
    }
}
