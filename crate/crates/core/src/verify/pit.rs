//! Randomized probability integral transform for discrete forecasts.
//!
//! For a discrete predictive distribution the plain PIT is not uniform even
//! under a perfect forecast, so the standard randomization is used: given
//! the observed class `x`, draw `u` uniformly on `[F(x-), F(x)]`, the CDF
//! interval spanned by the observed class. Under a calibrated forecast `u`
//! is exactly standard uniform; histograms of `u` expose the usual
//! dispersion errors (U shape for overconfidence, hump for underdispersion,
//! slopes for bias).

use rand::Rng;

use crate::error::Error;
use crate::okta::Okta;
use crate::pmf::Pmf;
use crate::Result;

/// Draws one randomized PIT value for a forecast/observation pair.
///
/// When the observed class has zero probability the interval collapses and
/// the value is `F(x-)` exactly.
pub fn pit_value(pmf: &Pmf, obs: Okta, rng: &mut impl Rng) -> f64 {
    let k = obs.index();
    let cdf = pmf.cdf();
    let lower = if k == 0 { 0.0 } else { cdf[k - 1] };
    let width = cdf[k] - lower;
    (lower + width * rng.gen::<f64>()).clamp(0.0, 1.0)
}

/// Bins PIT values into `n_bins` equal-width cells on [0, 1].
///
/// Cells are `[i/B, (i+1)/B)` with the final cell closed so `u = 1` lands
/// in the last bin. Values outside [0, 1] are rejected.
pub fn pit_histogram(values: &[f64], n_bins: usize) -> Result<Vec<u64>> {
    if n_bins == 0 {
        return Err(Error::config("PIT histogram needs at least one bin"));
    }
    let mut counts = vec![0u64; n_bins];
    for &u in values {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfRange {
                what: "PIT value",
                value: u,
            });
        }
        let bin = ((u * n_bins as f64) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

/// Chi-square goodness-of-fit p-value of a histogram against uniformity.
///
/// A small p-value is evidence of miscalibration. Requires at least two
/// bins and a nonzero total count.
pub fn chi_square_uniform(counts: &[u64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::config("chi-square test needs at least two bins"));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyTrainingSet("PIT histogram"));
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = (counts.len() - 1) as f64;
    let dist = statrs::distribution::ChiSquared::new(dof)
        .expect("dof >= 1 by construction");
    use statrs::distribution::ContinuousCDF;
    Ok(1.0 - dist.cdf(statistic))
}
