//! Multiclass (multinomial) logistic regression.
//!
//! With the last okta class as reference, each remaining class gets an
//! affine log-odds function of the features: `L_k(x) = b_k + x . w_k` for
//! the first eight classes and `L_9 = 0`. Probabilities are the softmax of
//! the nine latents. Fitting minimizes the mean negative log-likelihood
//! (optionally ridge-penalized on the weights) with the shared L-BFGS; the
//! objective is convex, so the stationary point reached is the global
//! optimum.

use crate::error::Error;
use crate::features::FeatureVariant;
use crate::okta::N_CLASSES;
use crate::optim::{minimize, Objective, OptimOptions, OptimResult};
use crate::pmf::Pmf;
use crate::Result;

use super::record::{RecordReader, RecordWriter};
use super::{softmax_pmf, TrainSet};

const N_FREE: usize = N_CLASSES - 1;

/// Settings shared by the two regression fits.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Ridge penalty on the slope weights (never on intercepts/cutpoints).
    pub l2: f64,
    /// Refuse to fit on fewer examples than this.
    pub min_samples: usize,
    /// Optimizer cap.
    pub max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            l2: 0.0,
            min_samples: 1,
            max_iters: 5000,
        }
    }
}

impl FitConfig {
    pub(crate) fn optim_options(&self) -> OptimOptions {
        OptimOptions {
            max_iters: self.max_iters,
            grad_tol: 1e-6,
            f_tol: 1e-8,
            memory: 10,
        }
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::config("l2 penalty must be finite and nonnegative"));
        }
        if n < self.min_samples.max(1) {
            return Err(Error::EmptyTrainingSet(
                "fewer examples than the configured minimum",
            ));
        }
        Ok(())
    }
}

/// A trained multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrModel {
    variant: FeatureVariant,
    dim: usize,
    /// `b_k` for the eight non-reference classes.
    intercepts: [f64; N_FREE],
    /// Row-major `8 x dim` slope matrix.
    weights: Vec<f64>,
}

impl MlrModel {
    pub fn new(
        variant: FeatureVariant,
        intercepts: [f64; N_FREE],
        weights: Vec<f64>,
    ) -> Result<MlrModel> {
        let dim = variant.dim();
        if weights.len() != N_FREE * dim {
            return Err(Error::DimensionMismatch {
                what: "MLR weight matrix",
                expected: N_FREE * dim,
                got: weights.len(),
            });
        }
        if intercepts.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLR parameter"));
        }
        Ok(MlrModel {
            variant,
            dim,
            intercepts,
            weights,
        })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    pub fn intercepts(&self) -> &[f64; N_FREE] {
        &self.intercepts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Latent log-odds of the eight non-reference classes.
    fn latents(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let mut l = [0.0; N_CLASSES];
        for k in 0..N_FREE {
            let w = &self.weights[k * self.dim..(k + 1) * self.dim];
            l[k] = self.intercepts[k]
                + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        }
        l
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "MLR feature row",
                expected: self.dim,
                got: row.len(),
            });
        }
        Ok(softmax_pmf(&self.latents(row)))
    }

    pub fn to_record(&self) -> String {
        let mut w = RecordWriter::new("mlr");
        w.str_field("variant", self.variant.id());
        w.usize_field("dim", self.dim);
        w.f64s_field("intercepts", self.intercepts.iter().copied());
        for k in 0..N_FREE {
            w.f64s_field(
                &format!("weights_{k}"),
                self.weights[k * self.dim..(k + 1) * self.dim].iter().copied(),
            );
        }
        w.finish()
    }

    pub(crate) fn parse(r: &mut RecordReader) -> Result<MlrModel> {
        let variant = FeatureVariant::from_id(&r.expect_str("variant")?)
            .map_err(|_| Error::parse(r.line(), "unknown feature variant"))?;
        let dim = r.expect_usize("dim")?;
        if dim != variant.dim() {
            return Err(Error::parse(r.line(), "dim does not match variant"));
        }
        let icepts = r.expect_f64s("intercepts", N_FREE)?;
        let mut intercepts = [0.0; N_FREE];
        intercepts.copy_from_slice(&icepts);
        let mut weights = Vec::with_capacity(N_FREE * dim);
        for k in 0..N_FREE {
            weights.extend(r.expect_f64s(&format!("weights_{k}"), dim)?);
        }
        MlrModel::new(variant, intercepts, weights)
    }
}

/// The penalized mean negative log-likelihood of an MLR parameter vector.
///
/// Parameter layout: eight intercepts, then the row-major `8 x dim` weight
/// matrix. Public so external code (tests, diagnostics) can run gradient
/// checks against [`crate::optim::check_gradient`].
pub struct MlrObjective<'a> {
    train: &'a TrainSet,
    l2: f64,
}

impl<'a> MlrObjective<'a> {
    pub fn new(train: &'a TrainSet, l2: f64) -> MlrObjective<'a> {
        MlrObjective { train, l2 }
    }

    fn unpack(&self, x: &[f64]) -> ([f64; N_FREE], Vec<f64>) {
        let mut intercepts = [0.0; N_FREE];
        intercepts.copy_from_slice(&x[..N_FREE]);
        (intercepts, x[N_FREE..].to_vec())
    }
}

impl Objective for MlrObjective<'_> {
    fn dim(&self) -> usize {
        N_FREE * (self.train.dim() + 1)
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.train.dim();
        let n = self.train.n();
        grad.fill(0.0);
        let mut nll = 0.0;
        let inv_n = 1.0 / n as f64;

        let mut latents = [0.0; N_CLASSES];
        for i in 0..n {
            let row = self.train.row(i);
            let label = self.train.label(i);
            for k in 0..N_FREE {
                let w = &x[N_FREE + k * d..N_FREE + (k + 1) * d];
                latents[k] = x[k] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            latents[N_CLASSES - 1] = 0.0;

            let max = latents.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            let mut probs = [0.0; N_CLASSES];
            for k in 0..N_CLASSES {
                probs[k] = (latents[k] - max).exp();
                sum += probs[k];
            }
            let lse = max + sum.ln();
            nll += (lse - latents[label]) * inv_n;

            for k in 0..N_FREE {
                let residual =
                    (probs[k] / sum - if k == label { 1.0 } else { 0.0 }) * inv_n;
                grad[k] += residual;
                let gw = &mut grad[N_FREE + k * d..N_FREE + (k + 1) * d];
                for (g, &xi) in gw.iter_mut().zip(row) {
                    *g += residual * xi;
                }
            }
        }

        if self.l2 > 0.0 {
            for j in N_FREE..x.len() {
                nll += self.l2 * x[j] * x[j];
                grad[j] += 2.0 * self.l2 * x[j];
            }
        }
        nll
    }
}

/// Maximum-likelihood MLR fit.
///
/// Starts from the all-zero model (uniform probabilities), so the fitted
/// training NLL can only improve on it. Returns the optimizer trace along
/// with the model via [`MlrFitReport`] when needed; the plain entry point
/// discards it.
pub fn mlr_fit(train: &TrainSet, config: &FitConfig) -> Result<MlrModel> {
    mlr_fit_traced(train, config).map(|(m, _)| m)
}

/// As [`mlr_fit`], also exposing the optimizer result.
pub fn mlr_fit_traced(
    train: &TrainSet,
    config: &FitConfig,
) -> Result<(MlrModel, OptimResult)> {
    config.validate(train.n())?;
    let objective = MlrObjective::new(train, config.l2);
    let x0 = vec![0.0; objective.dim()];
    let result = minimize(&objective, &x0, &config.optim_options())?;
    let (intercepts, weights) = objective.unpack(&result.x);
    let model = MlrModel::new(train.variant(), intercepts, weights)?;
    Ok((model, result))
}
