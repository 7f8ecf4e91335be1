//! Stationary block bootstrap for score-mean confidence intervals.
//!
//! Daily scores are serially dependent, so iid resampling understates the
//! sampling variance of their mean. The stationary bootstrap resamples
//! whole blocks with geometrically distributed lengths (expected length
//! `mean_block_len`) wrapping circularly around the end of the series,
//! which keeps the resampled series stationary and the procedure valid
//! under weak dependence.

use rand::Rng;

use crate::error::Error;
use crate::Result;

/// A point estimate with a percentile confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ci {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Draws one stationary-bootstrap index path of length `n`.
///
/// The first index is uniform; afterwards, with probability
/// `1 / mean_block_len` the path restarts at a fresh uniform index,
/// otherwise it continues to the next index, wrapping at the end.
pub fn resample_indices(
    n: usize,
    mean_block_len: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    assert!(n > 0, "cannot resample an empty series");
    assert!(mean_block_len >= 1, "mean block length must be at least 1");
    let restart = 1.0 / mean_block_len as f64;
    let mut out = Vec::with_capacity(n);
    let mut i = rng.gen_range(0..n);
    for _ in 0..n {
        out.push(i);
        if rng.gen::<f64>() < restart {
            i = rng.gen_range(0..n);
        } else {
            i = (i + 1) % n;
        }
    }
    out
}

/// Percentile confidence interval for the mean of `values`.
///
/// `n_boot` replicate means are formed from stationary-bootstrap resamples
/// and the central `level` mass of their distribution (linear-interpolation
/// quantiles) gives the interval. The point estimate is the plain sample
/// mean.
pub fn bootstrap_ci(
    values: &[f64],
    n_boot: usize,
    mean_block_len: usize,
    level: f64,
    rng: &mut impl Rng,
) -> Result<Ci> {
    if values.is_empty() {
        return Err(Error::EmptyTrainingSet("bootstrap input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bootstrap input"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::OutOfRange {
            what: "confidence level",
            value: level,
        });
    }
    if n_boot < 2 {
        return Err(Error::config("need at least two bootstrap replicates"));
    }
    if mean_block_len < 1 {
        return Err(Error::config("mean block length must be at least 1"));
    }

    let n = values.len();
    let point = values.iter().sum::<f64>() / n as f64;
    let mut means = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut acc = 0.0;
        let restart = 1.0 / mean_block_len as f64;
        let mut i = rng.gen_range(0..n);
        for _ in 0..n {
            acc += values[i];
            if rng.gen::<f64>() < restart {
                i = rng.gen_range(0..n);
            } else {
                i = (i + 1) % n;
            }
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let quantile = |q: f64| -> f64 {
        let pos = q * (n_boot - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        means[lo] + frac * (means[hi] - means[lo])
    };
    let tail = (1.0 - level) / 2.0;
    Ok(Ci {
        point,
        lo: quantile(tail),
        hi: quantile(1.0 - tail),
    })
}
