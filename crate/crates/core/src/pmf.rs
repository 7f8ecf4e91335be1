//! Predictive probability mass functions over the nine okta classes.

use crate::error::Error;
use crate::okta::{Okta, N_CLASSES};
use crate::Result;

/// Tolerance on the probability sum accepted by [`Pmf::from_probs`].
/// Wide enough for any sane accumulation order over nine terms, tight
/// enough to catch a forgotten normalization.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability distribution over the nine okta classes.
///
/// Invariants held on construction: every entry is finite and nonnegative
/// and the entries sum to 1 within [`SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf([f64; N_CLASSES]);

impl Pmf {
    /// Normalizes nonnegative weights into a distribution.
    ///
    /// Fails if any weight is negative or non-finite, or if all weights are
    /// zero (there is no defensible uniform fallback: a model that produced
    /// an all-zero score vector is broken and must surface as such).
    pub fn from_weights(weights: &[f64; N_CLASSES]) -> Result<Pmf> {
        let mut total = 0.0;
        for &w in weights {
            if !w.is_finite() {
                return Err(Error::NonFinite("pmf weight"));
            }
            if w < 0.0 {
                return Err(Error::OutOfRange {
                    what: "pmf weight",
                    value: w,
                });
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::OutOfRange {
                what: "pmf weight total",
                value: total,
            });
        }
        let mut probs = [0.0; N_CLASSES];
        for (p, &w) in probs.iter_mut().zip(weights) {
            *p = w / total;
        }
        Ok(Pmf(probs))
    }

    /// Wraps probabilities that are already normalized.
    pub fn from_probs(probs: &[f64; N_CLASSES]) -> Result<Pmf> {
        let mut total = 0.0;
        for &p in probs {
            if !p.is_finite() {
                return Err(Error::NonFinite("pmf probability"));
            }
            if p < 0.0 {
                return Err(Error::OutOfRange {
                    what: "pmf probability",
                    value: p,
                });
            }
            total += p;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::OutOfRange {
                what: "pmf probability total",
                value: total,
            });
        }
        Ok(Pmf(*probs))
    }

    /// Point mass on a single class.
    pub fn delta(okta: Okta) -> Pmf {
        let mut probs = [0.0; N_CLASSES];
        probs[okta.index()] = 1.0;
        Pmf(probs)
    }

    /// Uniform distribution over the nine classes.
    pub fn uniform() -> Pmf {
        Pmf([1.0 / N_CLASSES as f64; N_CLASSES])
    }

    /// Probability of one class.
    pub fn prob(&self, okta: Okta) -> f64 {
        self.0[okta.index()]
    }

    /// All nine probabilities in class order.
    pub fn probs(&self) -> &[f64; N_CLASSES] {
        &self.0
    }

    /// Cumulative distribution in class order.
    ///
    /// The running sum is clamped to 1 and the final entry is pinned to
    /// exactly 1.0 so downstream consumers (PIT, CRPS identities) never see
    /// a total like 0.9999999999999997.
    pub fn cdf(&self) -> [f64; N_CLASSES] {
        let mut out = [0.0; N_CLASSES];
        let mut acc = 0.0;
        for (c, &p) in out.iter_mut().zip(&self.0) {
            acc = (acc + p).min(1.0);
            *c = acc;
        }
        out[N_CLASSES - 1] = 1.0;
        out
    }
}
