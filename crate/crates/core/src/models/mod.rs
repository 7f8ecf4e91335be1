//! The five classifier families and their shared plumbing.
//!
//! Every model maps an engineered feature vector to a predictive
//! distribution over the nine okta classes. Training interfaces differ
//! (the tree ensembles want validation splits and RNGs, the regressions do
//! not), but prediction and serialization are uniform through [`Model`].

pub mod cart;
pub mod forest;
pub mod gbm;
pub mod mlp;
pub mod mlr;
pub mod polr;
mod record;

pub use cart::{cart_grow, CartParams, CartTarget, CartTree, Node};
pub use forest::{rf_fit, RfModel, RfParams};
pub use gbm::{gbm_fit, gbm_fit_fixed, GbmModel, GbmParams, GbmReport};
pub use mlp::{mlp_train, MlpModel, MlpObjective, MlpParams, MlpReport};
pub use mlr::{mlr_fit, FitConfig, MlrModel, MlrObjective};
pub use polr::{polr_fit, PolrModel, PolrObjective};

use crate::error::Error;
use crate::features::{FeatureVariant, FeatureVector};
use crate::okta::{Okta, N_CLASSES};
use crate::pmf::Pmf;
use crate::Result;

/// A validated training design: flattened feature rows plus class labels.
#[derive(Debug, Clone)]
pub struct TrainSet {
    variant: FeatureVariant,
    dim: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl TrainSet {
    /// Flattens feature vectors under `variant` and validates labels.
    pub fn build(
        variant: FeatureVariant,
        samples: &[(FeatureVector, Okta)],
    ) -> Result<TrainSet> {
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet("classifier training set"));
        }
        let dim = variant.dim();
        let mut x = Vec::with_capacity(samples.len() * dim);
        let mut y = Vec::with_capacity(samples.len());
        for (features, okta) in samples {
            let row = features.to_vec(variant)?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training feature"));
            }
            x.extend_from_slice(&row);
            y.push(okta.index() as u8);
        }
        Ok(TrainSet { variant, dim, x, y })
    }

    /// Builds directly from raw rows; intended for tests and tools.
    pub fn from_rows(
        variant: FeatureVariant,
        rows: &[Vec<f64>],
        labels: &[Okta],
    ) -> Result<TrainSet> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet("classifier training set"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "training rows vs labels",
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let dim = variant.dim();
        let mut x = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "training feature row",
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training feature"));
            }
            x.extend_from_slice(row);
        }
        let y = labels.iter().map(|o| o.index() as u8).collect();
        Ok(TrainSet { variant, dim, x, y })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Class index of sample `i`.
    pub fn label(&self, i: usize) -> usize {
        self.y[i] as usize
    }

    /// Class frequencies over the whole set.
    pub fn class_frequencies(&self) -> [f64; N_CLASSES] {
        let mut freq = [0.0; N_CLASSES];
        for &c in &self.y {
            freq[c as usize] += 1.0;
        }
        for f in freq.iter_mut() {
            *f /= self.y.len() as f64;
        }
        freq
    }

    /// A new set containing the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> TrainSet {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        TrainSet {
            variant: self.variant,
            dim: self.dim,
            x,
            y,
        }
    }
}

/// A trained classifier of any family, with uniform predict/serialize.
#[derive(Debug, Clone)]
pub enum Model {
    Mlr(MlrModel),
    Polr(PolrModel),
    Mlp(MlpModel),
    Rf(RfModel),
    Gbm(GbmModel),
}

impl Model {
    /// Feature variant the model was trained on.
    pub fn variant(&self) -> FeatureVariant {
        match self {
            Model::Mlr(m) => m.variant(),
            Model::Polr(m) => m.variant(),
            Model::Mlp(m) => m.variant(),
            Model::Rf(m) => m.variant(),
            Model::Gbm(m) => m.variant(),
        }
    }

    /// Predictive okta distribution for one forecast's features.
    pub fn predict(&self, features: &FeatureVector) -> Result<Pmf> {
        let row = features.to_vec(self.variant())?;
        self.predict_row(&row)
    }

    /// Prediction from an already-flattened covariate row.
    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        match self {
            Model::Mlr(m) => m.predict_row(row),
            Model::Polr(m) => m.predict_row(row),
            Model::Mlp(m) => m.predict_row(row),
            Model::Rf(m) => m.predict_row(row),
            Model::Gbm(m) => m.predict_row(row),
        }
    }

    /// Serializes to the versioned text record format.
    pub fn to_record(&self) -> String {
        match self {
            Model::Mlr(m) => m.to_record(),
            Model::Polr(m) => m.to_record(),
            Model::Mlp(m) => m.to_record(),
            Model::Rf(m) => m.to_record(),
            Model::Gbm(m) => m.to_record(),
        }
    }

    /// Parses any model family back from its record.
    pub fn from_record(text: &str) -> Result<Model> {
        let mut reader = record::RecordReader::open(text)?;
        let kind = reader.expect_str("kind")?;
        match kind.as_str() {
            "mlr" => Ok(Model::Mlr(MlrModel::parse(&mut reader)?)),
            "polr" => Ok(Model::Polr(PolrModel::parse(&mut reader)?)),
            "mlp" => Ok(Model::Mlp(MlpModel::parse(&mut reader)?)),
            "rf" => Ok(Model::Rf(RfModel::parse(&mut reader)?)),
            "gbm" => Ok(Model::Gbm(GbmModel::parse(&mut reader)?)),
            other => Err(Error::parse(
                reader.line(),
                format!("unknown model kind {other:?}"),
            )),
        }
    }
}

/// Numerically stable softmax into a pmf: subtracts the maximum latent
/// before exponentiation. Infallible for finite latents.
pub(crate) fn softmax_pmf(latents: &[f64; N_CLASSES]) -> Pmf {
    let max = latents.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut w = [0.0; N_CLASSES];
    for (wk, &l) in w.iter_mut().zip(latents) {
        *wk = (l - max).exp();
    }
    Pmf::from_weights(&w).expect("softmax weights are positive")
}
