//! Proportional odds (ordered) logistic regression.
//!
//! One shared slope vector and ordered cutpoints on the cumulative logits:
//! `P(Y <= y_k | x) = sigma(g_k - x . beta)` for the first eight classes,
//! with `g_1 < g_2 < ... < g_8` and the ninth cutpoint pinned at plus
//! infinity so the last cumulative probability is exactly 1. Under this
//! sign convention a positive slope entry means that growing the covariate
//! shifts probability mass toward cloudier classes, which is what the
//! non-negativity constraint on the three forecast-mean covariates is
//! meant to enforce.
//!
//! Fitting is maximum likelihood with monotonicity built into the
//! parametrization (first cutpoint free, increments exponentiated), then an
//! iterative exclusion pass: while any constrained covariate has a negative
//! fitted slope, the most negative one is dropped to zero and the model is
//! refitted without it.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::features::FeatureVariant;
use crate::okta::N_CLASSES;
use crate::optim::{minimize, Objective};
use crate::pmf::Pmf;
use crate::Result;

use super::record::{RecordReader, RecordWriter};
use super::{FitConfig, TrainSet};

const N_CUTS: usize = N_CLASSES - 1;

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A trained proportional odds model.
#[derive(Debug, Clone, PartialEq)]
pub struct PolrModel {
    variant: FeatureVariant,
    dim: usize,
    /// Nine cutpoints, strictly increasing; the ninth is always `+inf` so
    /// prediction needs no special case for the final cumulative step.
    cutpoints: [f64; N_CLASSES],
    /// Shared slope, one entry per covariate; excluded entries are 0.
    slope: Vec<f64>,
    /// Covariates removed by the non-negativity procedure.
    excluded: BTreeSet<usize>,
}

impl PolrModel {
    pub fn new(
        variant: FeatureVariant,
        finite_cutpoints: [f64; N_CUTS],
        slope: Vec<f64>,
        excluded: BTreeSet<usize>,
    ) -> Result<PolrModel> {
        let dim = variant.dim();
        if slope.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "POLR slope",
                expected: dim,
                got: slope.len(),
            });
        }
        if finite_cutpoints.iter().chain(&slope).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("POLR parameter"));
        }
        if finite_cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("POLR cutpoints must strictly increase"));
        }
        if excluded.iter().any(|&i| i >= dim) {
            return Err(Error::config("excluded covariate index out of range"));
        }
        let mut cutpoints = [f64::INFINITY; N_CLASSES];
        cutpoints[..N_CUTS].copy_from_slice(&finite_cutpoints);
        Ok(PolrModel {
            variant,
            dim,
            cutpoints,
            slope,
            excluded,
        })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    /// All nine cutpoints; the last is `+inf`.
    pub fn cutpoints(&self) -> &[f64; N_CLASSES] {
        &self.cutpoints
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    pub fn excluded(&self) -> &BTreeSet<usize> {
        &self.excluded
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "POLR feature row",
                expected: self.dim,
                got: row.len(),
            });
        }
        let z: f64 = self.slope.iter().zip(row).map(|(a, b)| a * b).sum();
        let mut weights = [0.0; N_CLASSES];
        let mut prev = 0.0;
        for k in 0..N_CLASSES {
            let cdf = sigmoid(self.cutpoints[k] - z);
            // Monotone cutpoints make the difference nonnegative up to
            // rounding; clamp the dust.
            weights[k] = (cdf - prev).max(0.0);
            prev = cdf;
        }
        Pmf::from_weights(&weights)
    }

    pub fn to_record(&self) -> String {
        let mut w = RecordWriter::new("polr");
        w.str_field("variant", self.variant.id());
        w.usize_field("dim", self.dim);
        w.f64s_field("cutpoints", self.cutpoints[..N_CUTS].iter().copied());
        w.f64s_field("slope", self.slope.iter().copied());
        w.usizes_field("excluded", self.excluded.iter().copied());
        w.finish()
    }

    pub(crate) fn parse(r: &mut RecordReader) -> Result<PolrModel> {
        let variant = FeatureVariant::from_id(&r.expect_str("variant")?)
            .map_err(|_| Error::parse(r.line(), "unknown feature variant"))?;
        let dim = r.expect_usize("dim")?;
        if dim != variant.dim() {
            return Err(Error::parse(r.line(), "dim does not match variant"));
        }
        let cuts = r.expect_f64s("cutpoints", N_CUTS)?;
        let mut finite = [0.0; N_CUTS];
        finite.copy_from_slice(&cuts);
        let slope = r.expect_f64s("slope", dim)?;
        let excluded: BTreeSet<usize> = r.expect_usizes("excluded")?.into_iter().collect();
        PolrModel::new(variant, finite, slope, excluded)
    }
}

/// Penalized mean negative log-likelihood in the monotone parametrization.
///
/// Free parameters: the first cutpoint, seven log-increments (the k-th
/// finite cutpoint is `g_1 + sum of exp(u_m)`), then one slope entry per
/// active covariate.
pub struct PolrObjective<'a> {
    train: &'a TrainSet,
    l2: f64,
}

impl<'a> PolrObjective<'a> {
    pub fn new(train: &'a TrainSet, l2: f64) -> PolrObjective<'a> {
        PolrObjective { train, l2 }
    }

    fn cutpoints_of(params: &[f64]) -> [f64; N_CUTS] {
        let mut g = [0.0; N_CUTS];
        g[0] = params[0];
        for m in 1..N_CUTS {
            g[m] = g[m - 1] + params[m].exp();
        }
        g
    }
}

impl Objective for PolrObjective<'_> {
    fn dim(&self) -> usize {
        N_CUTS + self.train.dim()
    }

    fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.train.dim();
        let n = self.train.n();
        let inv_n = 1.0 / n as f64;
        grad.fill(0.0);

        let g = Self::cutpoints_of(params);
        if g.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let beta = &params[N_CUTS..];
        let mut grad_g = [0.0; N_CUTS];
        let mut nll = 0.0;

        for i in 0..n {
            let row = self.train.row(i);
            let c = self.train.label(i);
            let z: f64 = beta.iter().zip(row).map(|(a, b)| a * b).sum();

            let f_hi;
            let dens_hi;
            if c < N_CUTS {
                let s = sigmoid(g[c] - z);
                f_hi = s;
                dens_hi = s * (1.0 - s);
            } else {
                f_hi = 1.0;
                dens_hi = 0.0;
            }
            let f_lo;
            let dens_lo;
            if c > 0 {
                let s = sigmoid(g[c - 1] - z);
                f_lo = s;
                dens_lo = s * (1.0 - s);
            } else {
                f_lo = 0.0;
                dens_lo = 0.0;
            }
            let p = f_hi - f_lo;
            if !(p > 1e-300) {
                // The step went somewhere the likelihood underflows; signal
                // the line search to back off.
                grad.fill(0.0);
                return f64::INFINITY;
            }
            nll -= p.ln() * inv_n;

            let w = inv_n / p;
            if c < N_CUTS {
                grad_g[c] -= dens_hi * w;
            }
            if c > 0 {
                grad_g[c - 1] += dens_lo * w;
            }
            let coeff = (dens_hi - dens_lo) * w;
            for (gb, &xi) in grad[N_CUTS..].iter_mut().zip(row) {
                *gb += coeff * xi;
            }
        }

        // Chain rule through the monotone reparametrization: the first
        // parameter moves every cutpoint, the m-th log-increment moves
        // cutpoints m and above by exp(u_m).
        let mut suffix = 0.0;
        for m in (1..N_CUTS).rev() {
            suffix += grad_g[m];
            grad[m] = params[m].exp() * suffix;
        }
        grad[0] = suffix + grad_g[0];

        if self.l2 > 0.0 {
            for j in 0..d {
                nll += self.l2 * beta[j] * beta[j];
                grad[N_CUTS + j] += 2.0 * self.l2 * beta[j];
            }
        }
        nll
    }
}

/// Marginal-frequency starting point: cutpoints at the logits of the
/// smoothed cumulative class frequencies, slopes at zero. With zero slopes
/// this is the exact intercept-only optimum.
fn initial_params(train: &TrainSet, dim: usize) -> Vec<f64> {
    let mut counts = [0.5f64; N_CLASSES];
    for i in 0..train.n() {
        counts[train.label(i)] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let mut params = vec![0.0; N_CUTS + dim];
    let mut cum = 0.0;
    let mut prev_g = 0.0;
    for k in 0..N_CUTS {
        cum += counts[k];
        let f = cum / total;
        let g = (f / (1.0 - f)).ln().clamp(-8.0, 8.0);
        if k == 0 {
            params[0] = g;
        } else {
            params[k] = (g - prev_g).max(1e-6).ln();
        }
        prev_g = g;
    }
    params
}

/// Maximum-likelihood POLR fit with iterative non-negativity exclusion.
///
/// `nonneg_indices` lists covariate positions whose slopes must come out
/// nonnegative; while any of them is fitted negative, the most negative one
/// is excluded (its slope pinned to exactly zero) and the remaining
/// covariates are refitted. The returned model records the exclusions.
pub fn polr_fit(
    train: &TrainSet,
    config: &FitConfig,
    nonneg_indices: &BTreeSet<usize>,
) -> Result<PolrModel> {
    config.validate(train.n())?;
    let dim = train.dim();
    if nonneg_indices.iter().any(|&i| i >= dim) {
        return Err(Error::config("non-negativity index out of range"));
    }

    let mut active: Vec<usize> = (0..dim).collect();
    let mut excluded = BTreeSet::new();
    loop {
        let reduced = reduce_columns(train, &active);
        let objective = PolrObjective::new(&reduced, config.l2);
        let x0 = initial_params(&reduced, active.len());
        let result = minimize(&objective, &x0, &config.optim_options())?;

        let beta = &result.x[N_CUTS..];
        let mut worst: Option<(usize, f64)> = None;
        for (pos, &col) in active.iter().enumerate() {
            if nonneg_indices.contains(&col) && beta[pos] < 0.0 {
                if worst.map_or(true, |(_, v)| beta[pos] < v) {
                    worst = Some((pos, beta[pos]));
                }
            }
        }
        match worst {
            Some((pos, _)) => {
                excluded.insert(active.remove(pos));
            }
            None => {
                let g = PolrObjective::cutpoints_of(&result.x);
                let mut slope = vec![0.0; dim];
                for (pos, &col) in active.iter().enumerate() {
                    slope[col] = beta[pos];
                }
                return PolrModel::new(train.variant(), g, slope, excluded);
            }
        }
    }
}

/// Copy of `train` keeping only the listed feature columns, preserving the
/// declared variant for bookkeeping (the reduced set is internal to the
/// exclusion loop and never leaves this module).
fn reduce_columns(train: &TrainSet, columns: &[usize]) -> TrainSet {
    if columns.len() == train.dim() {
        return train.clone();
    }
    let mut x = Vec::with_capacity(train.n() * columns.len());
    let mut y = Vec::with_capacity(train.n());
    for i in 0..train.n() {
        let row = train.row(i);
        for &c in columns {
            x.push(row[c]);
        }
        y.push(train.label(i) as u8);
    }
    TrainSet {
        variant: train.variant(),
        dim: columns.len(),
        x,
        y,
    }
}
