//! Synthetic desk-scale forecast data with controllable miscalibration.
//!
//! The generator draws, per station, a standardized AR(1) weather driver
//! plus a deterministic seasonal cycle; cloud-cover truth is an affine map
//! of that latent clipped to [0, 1] and quantized to oktas. A forecast at
//! lead `h` sees the driver through a channel whose correlation decays
//! geometrically in `h`; ensemble members are draws from the conditional
//! law of the truth latent given that channel, perturbed by the configured
//! corruption:
//!
//! * `spread_deflation` scales the conditional spread (1 = calibrated by
//!   construction, smaller = underdispersed),
//! * `bias` shifts every member on the latent scale,
//! * the high-resolution run gets `hres_noise_ratio` times the member
//!   noise, the control run gets the member noise unchanged.
//!
//! Member fractions are rounded to 1e-4 so saved files reload bitwise.
//! Everything is keyed off per-station seeds derived from the master seed;
//! stations are generated in parallel and results are identical for
//! identical configurations.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

use super::{DatasetBuilder, StationDataset};
use crate::error::Error;
use crate::forecast::{EnsembleForecast, StationId, N_EXCHANGEABLE};
use crate::okta;
use crate::Result;

/// Generator configuration; TOML-deserializable with per-field defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub n_days: usize,
    pub lead_times: Vec<u8>,
    pub start_date: NaiveDate,
    pub seed: u64,
    /// AR(1) coefficient of the daily weather driver, in [0, 1).
    pub autocorrelation: f64,
    /// Amplitude of the seasonal cycle on the latent scale.
    pub seasonal_amplitude: f64,
    /// Latent-to-fraction scale; larger values spread truth wider over
    /// [0, 1] and grow the clipped point masses at 0 and 1.
    pub latent_spread: f64,
    /// Additive member bias on the latent scale.
    pub bias: f64,
    /// Multiplier on the calibrated member spread; 1 is calibrated.
    pub spread_deflation: f64,
    /// Extra member noise multiplier on top of the deflation factor.
    pub member_noise: f64,
    /// Per-day decay of the forecast-truth correlation, in (0, 1].
    pub skill_decay: f64,
    /// High-resolution run noise relative to exchangeable members.
    pub hres_noise_ratio: f64,
    /// Emit the ensemble-mean precipitation covariate.
    pub precip: bool,
    /// Cloud-precipitation coupling strength, in [0, 1].
    pub precip_coupling: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            n_stations: 20,
            n_days: 3000,
            lead_times: vec![1, 4, 7],
            start_date: NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(),
            seed: 20231,
            autocorrelation: 0.75,
            seasonal_amplitude: 0.6,
            latent_spread: 0.32,
            bias: 0.1,
            spread_deflation: 0.5,
            member_noise: 1.0,
            skill_decay: 0.92,
            hres_noise_ratio: 0.75,
            precip: true,
            precip_coupling: 0.8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("synth: {what}")))
            }
        };
        check(self.n_stations >= 1, "n_stations must be at least 1")?;
        check(self.n_days >= 1, "n_days must be at least 1")?;
        check(!self.lead_times.is_empty(), "lead_times must not be empty")?;
        check(
            self.lead_times.windows(2).all(|w| w[0] < w[1]),
            "lead_times must be strictly increasing",
        )?;
        check(
            self.lead_times.iter().all(|&l| l >= 1),
            "lead times start at one day",
        )?;
        check(
            (0.0..1.0).contains(&self.autocorrelation),
            "autocorrelation must lie in [0, 1)",
        )?;
        check(
            self.seasonal_amplitude.is_finite() && self.seasonal_amplitude >= 0.0,
            "seasonal_amplitude must be nonnegative",
        )?;
        check(
            self.latent_spread.is_finite() && self.latent_spread > 0.0,
            "latent_spread must be positive",
        )?;
        check(self.bias.is_finite() && self.bias.abs() <= 2.0, "bias must lie in [-2, 2]")?;
        check(
            self.spread_deflation > 0.0 && self.spread_deflation <= 2.0,
            "spread_deflation must lie in (0, 2]",
        )?;
        check(
            self.member_noise > 0.0 && self.member_noise.is_finite(),
            "member_noise must be positive",
        )?;
        check(
            self.skill_decay > 0.0 && self.skill_decay <= 1.0,
            "skill_decay must lie in (0, 1]",
        )?;
        check(
            self.hres_noise_ratio > 0.0 && self.hres_noise_ratio <= 1.5,
            "hres_noise_ratio must lie in (0, 1.5]",
        )?;
        check(
            (0.0..=1.0).contains(&self.precip_coupling),
            "precip_coupling must lie in [0, 1]",
        )?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<SynthConfig> {
        let config: SynthConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("synth config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<SynthConfig> {
        SynthConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn station_seed(&self, station: usize) -> u64 {
        // Distinct per-station streams derived from the master seed.
        self.seed
            .wrapping_add((station as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Round to 1e-4 so the text format stores short exact decimals.
fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn seasonal(amplitude: f64, date: NaiveDate) -> f64 {
    // Peaks at the turn of the year: winters are cloudier.
    amplitude * (TAU * (date.ordinal() as f64 - 1.0) / 365.25).cos()
}

/// Generates a complete dataset: one row per station, date and lead time.
pub fn synth_generate(config: &SynthConfig) -> Result<StationDataset> {
    config.validate()?;
    let stations: Vec<_> = (0..config.n_stations)
        .into_par_iter()
        .map(|s| generate_station(config, s))
        .collect::<Result<_>>()?;

    let mut builder = DatasetBuilder::new(config.lead_times.clone());
    for (id, days) in stations {
        for (date, obs, forecasts) in days {
            builder.push(&id, date, obs, forecasts);
        }
    }
    Ok(builder.finish())
}

type StationDays = Vec<(NaiveDate, okta::Okta, Vec<Option<EnsembleForecast>>)>;

fn generate_station(config: &SynthConfig, station: usize) -> Result<(StationId, StationDays)> {
    let id = StationId(format!("st{:03}", station + 1));
    let mut rng = ChaCha12Rng::seed_from_u64(config.station_seed(station));
    let phi = config.autocorrelation;
    let innovation = (1.0 - phi * phi).sqrt();
    let normal = |rng: &mut ChaCha12Rng| -> f64 { rng.sample(StandardNormal) };

    let mut days = Vec::with_capacity(config.n_days);
    let mut z = normal(&mut rng);
    for day in 0..config.n_days {
        if day > 0 {
            z = phi * z + innovation * normal(&mut rng);
        }
        let date = config.start_date + chrono::Duration::days(day as i64);
        let s_t = seasonal(config.seasonal_amplitude, date);
        let truth_frac = clip01(0.5 + config.latent_spread * (z + s_t));
        let obs = okta::quantize(truth_frac)?;

        let mut forecasts = Vec::with_capacity(config.lead_times.len());
        for &lead in &config.lead_times {
            let rho = config.skill_decay.powi(lead as i32);
            let channel = rho * z + (1.0 - rho * rho).sqrt() * normal(&mut rng);
            // Conditional law of z given the channel: N(rho*channel, 1-rho^2).
            let center = rho * channel;
            let sigma = (1.0 - rho * rho).sqrt()
                * config.spread_deflation
                * config.member_noise;
            let draw = |scale: f64, rng: &mut ChaCha12Rng| -> f64 {
                let latent = s_t + center + config.bias + scale * normal(rng);
                round4(clip01(0.5 + config.latent_spread * latent))
            };
            let mut members = [0.0; N_EXCHANGEABLE];
            for m in &mut members {
                *m = draw(sigma, &mut rng);
            }
            let ctrl = draw(sigma, &mut rng);
            let hres = draw(sigma * config.hres_noise_ratio, &mut rng);
            let precip_mean = if config.precip {
                let c = config.precip_coupling;
                let q = c * (s_t + center) + (1.0 - c * c).sqrt() * normal(&mut rng);
                // Softplus keeps the value nonnegative with a wet tail.
                Some(round4(q.exp().ln_1p()))
            } else {
                None
            };
            forecasts.push(Some(EnsembleForecast::new(
                id.clone(),
                date,
                lead,
                members,
                ctrl,
                hres,
                precip_mean,
            )?));
        }
        days.push((date, obs, forecasts));
    }
    Ok((id, days))
}
