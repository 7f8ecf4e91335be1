//! Proper scores for discrete okta distributions.

use crate::error::Error;
use crate::okta::{Okta, N_CLASSES, OKTA_FRACTIONS};
use crate::pmf::Pmf;
use crate::Result;

/// Continuous ranked probability score of a discrete okta distribution
/// against an observed okta class, both living on the representative
/// cloud-fraction support.
///
/// Computed in the energy form
/// `E|Y - x| - sum_{k > l} p_k p_l (y_k - y_l)`,
/// where the second term is half the expected absolute difference of two
/// independent draws. Lower is better; zero iff the forecast is a point
/// mass on the observed class.
pub fn crps(pmf: &Pmf, obs: Okta) -> f64 {
    let x = obs.fraction();
    let p = pmf.probs();
    let mut expected_dist = 0.0;
    for k in 0..N_CLASSES {
        expected_dist += p[k] * (OKTA_FRACTIONS[k] - x).abs();
    }
    let mut pair_term = 0.0;
    for k in 1..N_CLASSES {
        for l in 0..k {
            pair_term += p[k] * p[l] * (OKTA_FRACTIONS[k] - OKTA_FRACTIONS[l]);
        }
    }
    expected_dist - pair_term
}

/// Logarithmic score: negative log probability of the observed class.
///
/// A forecast that assigned exactly zero probability to the outcome has an
/// infinite score; that is surfaced as an error rather than an `f64`
/// infinity so callers must decide how to handle it (training pipelines
/// floor their distributions first, see [`floor_pmf`]).
pub fn log_score(pmf: &Pmf, obs: Okta) -> Result<f64> {
    let p = pmf.prob(obs);
    if p <= 0.0 {
        return Err(Error::ZeroProbability { index: obs.index() });
    }
    Ok(-p.ln())
}

/// Probability floor implied by a training sample of `t_days` days.
///
/// Chosen so that the probability of at least one future event falling in a
/// class the model assigned less than the floor stays at the 1% level over
/// a period as long as the training sample: `1 - (1 - p_min)^T = 0.01`.
pub fn p_min(t_days: usize) -> f64 {
    assert!(t_days >= 1, "training length must be at least one day");
    1.0 - 0.99f64.powf(1.0 / t_days as f64)
}

/// Floors every class probability at [`p_min`]`(t_days)` and renormalizes
/// by scaling down only the probability mass sitting above the floor.
///
/// Writing `m = p_min` and `f_k = max(p_k, m)`, the result is
/// `p'_k = m + a (f_k - m)` with `a = (1 - 9 m) / sum_k (f_k - m)`,
/// which leaves classes at the floor exactly at the floor, preserves the
/// ordering of the original probabilities, and sums to one. Distributions
/// that already respect the floor are returned unchanged (up to rounding).
pub fn floor_pmf(pmf: &Pmf, t_days: usize) -> Pmf {
    let m = p_min(t_days);
    let p = pmf.probs();
    let mut floored = [0.0; N_CLASSES];
    let mut excess = 0.0;
    for k in 0..N_CLASSES {
        floored[k] = p[k].max(m);
        excess += floored[k] - m;
    }
    // excess >= 1 - 9m > 0 because the input sums to 1 and m < 1/9.
    let scale = (1.0 - N_CLASSES as f64 * m) / excess;
    let mut out = [0.0; N_CLASSES];
    for k in 0..N_CLASSES {
        out[k] = m + scale * (floored[k] - m);
    }
    Pmf::from_weights(&out).expect("floored probabilities are positive")
}

/// Skill of a method against a reference, from their mean scores:
/// `1 - mean / mean_ref`. Positive means better than the reference.
///
/// The reference mean must be strictly positive; a reference that scored
/// exactly zero admits no relative improvement.
pub fn skill_score(mean: f64, mean_ref: f64) -> Result<f64> {
    if !mean.is_finite() || !mean_ref.is_finite() {
        return Err(Error::NonFinite("mean score"));
    }
    if mean_ref <= 0.0 {
        return Err(Error::DegenerateSeries(
            "reference mean score must be positive",
        ));
    }
    Ok(1.0 - mean / mean_ref)
}
