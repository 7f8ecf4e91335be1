//! Multilayer perceptron classifier.
//!
//! Fixed architecture: input of M standardized features, two hidden layers
//! of 10 and 15 tanh neurons, softmax output over the nine okta classes.
//! The loss is mean cross-entropy plus `l2_factor` times the mean squared
//! weight (biases exempt). Training is mini-batch gradient descent with
//! momentum on a seeded 85/15 fit/validation split; the returned parameters
//! are the snapshot with the best validation cross-entropy, and training
//! stops once the validation loss has gone `patience + 1` consecutive
//! epochs without improving. A non-finite loss (divergent step) restores
//! the epoch, halves the step size and retries.
//!
//! Every random choice (split, initialization, batch order) flows from the
//! seed, so training is bit-reproducible given (data, config, seed).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::features::FeatureVariant;
use crate::okta::N_CLASSES;
use crate::optim::Objective;
use crate::pmf::Pmf;
use crate::Result;

use super::record::{RecordReader, RecordWriter};
use super::{softmax_pmf, TrainSet};

const H1: usize = 10;
const H2: usize = 15;
const C: usize = N_CLASSES;

/// Training configuration. The solver knobs (step size, momentum, batch
/// size) are implementation details with safe defaults; the contract knobs
/// are the loss (`l2_factor`), the split, and the stopping rule.
#[derive(Debug, Clone, Copy)]
pub struct MlpParams {
    pub l2_factor: f64,
    pub val_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            l2_factor: 0.1,
            val_fraction: 0.15,
            patience: 25,
            max_epochs: 300,
            seed: 0,
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 64,
        }
    }
}

/// Flat parameter layout: w1 (10 x M), b1, w2 (15 x 10), b2, w3 (9 x 15),
/// b3. Weight matrices are row-major with one row per output neuron.
#[derive(Debug, Clone, Copy)]
struct Layout {
    dim: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    fn of(dim: usize) -> Layout {
        let w1 = 0;
        let b1 = w1 + H1 * dim;
        let w2 = b1 + H1;
        let b2 = w2 + H2 * H1;
        let w3 = b2 + H2;
        let b3 = w3 + C * H2;
        Layout {
            dim,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total: b3 + C,
        }
    }

    /// Index ranges holding weights (penalized); biases are excluded.
    fn weight_ranges(&self) -> [std::ops::Range<usize>; 3] {
        [
            self.w1..self.b1,
            self.w2..self.b2,
            self.w3..self.b3,
        ]
    }

    /// Count of penalized (non-bias) parameters; the penalty is taken per
    /// weight so `l2_factor` keeps the same meaning across feature sets.
    fn n_weights(&self) -> usize {
        self.weight_ranges().iter().map(ExactSizeIterator::len).sum()
    }
}

fn forward(layout: &Layout, p: &[f64], x: &[f64], h1: &mut [f64], h2: &mut [f64], lat: &mut [f64]) {
    for i in 0..H1 {
        let row = &p[layout.w1 + i * layout.dim..layout.w1 + (i + 1) * layout.dim];
        let z: f64 = p[layout.b1 + i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        h1[i] = z.tanh();
    }
    for k in 0..H2 {
        let row = &p[layout.w2 + k * H1..layout.w2 + (k + 1) * H1];
        let z: f64 = p[layout.b2 + k] + row.iter().zip(&*h1).map(|(a, b)| a * b).sum::<f64>();
        h2[k] = z.tanh();
    }
    for c in 0..C {
        let row = &p[layout.w3 + c * H2..layout.w3 + (c + 1) * H2];
        lat[c] = p[layout.b3 + c] + row.iter().zip(&*h2).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Cross-entropy of one sample plus its gradient accumulated into `grad`.
fn backward(
    layout: &Layout,
    p: &[f64],
    x: &[f64],
    label: usize,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let Scratch { h1, h2, lat, probs, d2, d1 } = scratch;
    forward(layout, p, x, h1, h2, lat);

    let max = lat.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for c in 0..C {
        probs[c] = (lat[c] - max).exp();
        sum += probs[c];
    }
    let ce = max + sum.ln() - lat[label];

    // Output layer delta is p - onehot.
    for c in 0..C {
        let d3 = probs[c] / sum - if c == label { 1.0 } else { 0.0 };
        probs[c] = d3;
        grad[layout.b3 + c] += d3;
        let gw = &mut grad[layout.w3 + c * H2..layout.w3 + (c + 1) * H2];
        for (g, &h) in gw.iter_mut().zip(&*h2) {
            *g += d3 * h;
        }
    }
    for k in 0..H2 {
        let mut acc = 0.0;
        for c in 0..C {
            acc += p[layout.w3 + c * H2 + k] * probs[c];
        }
        d2[k] = acc * (1.0 - h2[k] * h2[k]);
        grad[layout.b2 + k] += d2[k];
        let gw = &mut grad[layout.w2 + k * H1..layout.w2 + (k + 1) * H1];
        for (g, &h) in gw.iter_mut().zip(&*h1) {
            *g += d2[k] * h;
        }
    }
    for i in 0..H1 {
        let mut acc = 0.0;
        for k in 0..H2 {
            acc += p[layout.w2 + k * H1 + i] * d2[k];
        }
        d1[i] = acc * (1.0 - h1[i] * h1[i]);
        grad[layout.b1 + i] += d1[i];
        let gw = &mut grad[layout.w1 + i * layout.dim..layout.w1 + (i + 1) * layout.dim];
        for (g, &xi) in gw.iter_mut().zip(x) {
            *g += d1[i] * xi;
        }
    }
    ce
}

struct Scratch {
    h1: [f64; H1],
    h2: [f64; H2],
    lat: [f64; C],
    probs: [f64; C],
    d2: [f64; H2],
    d1: [f64; H1],
}

impl Scratch {
    fn new() -> Scratch {
        Scratch {
            h1: [0.0; H1],
            h2: [0.0; H2],
            lat: [0.0; C],
            probs: [0.0; C],
            d2: [0.0; H2],
            d1: [0.0; H1],
        }
    }
}

/// A trained multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    variant: FeatureVariant,
    dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    params: Vec<f64>,
    l2_factor: f64,
    seed: u64,
}

impl MlpModel {
    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    /// Per-feature standardization (mean, scale) baked in at training time.
    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.mean, &self.scale)
    }

    /// Builds a model directly from tensors; mostly for tests.
    pub fn from_parts(
        variant: FeatureVariant,
        mean: Vec<f64>,
        scale: Vec<f64>,
        params: Vec<f64>,
        l2_factor: f64,
        seed: u64,
    ) -> Result<MlpModel> {
        let dim = variant.dim();
        let layout = Layout::of(dim);
        if mean.len() != dim || scale.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "MLP standardization",
                expected: dim,
                got: mean.len().min(scale.len()),
            });
        }
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch {
                what: "MLP parameter vector",
                expected: layout.total,
                got: params.len(),
            });
        }
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::OutOfRange {
                what: "MLP standardization scale",
                value: *scale.iter().find(|&&s| !(s > 0.0)).unwrap(),
            });
        }
        if params.iter().chain(&mean).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP parameter"));
        }
        Ok(MlpModel {
            variant,
            dim,
            mean,
            scale,
            params,
            l2_factor,
            seed,
        })
    }

    fn standardize(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..self.dim {
            out.push((row[j] - self.mean[j]) / self.scale[j]);
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "MLP feature row",
                expected: self.dim,
                got: row.len(),
            });
        }
        let layout = Layout::of(self.dim);
        let mut std_row = Vec::with_capacity(self.dim);
        self.standardize(row, &mut std_row);
        let mut h1 = [0.0; H1];
        let mut h2 = [0.0; H2];
        let mut lat = [0.0; C];
        forward(&layout, &self.params, &std_row, &mut h1, &mut h2, &mut lat);
        Ok(softmax_pmf(&lat))
    }

    pub fn to_record(&self) -> String {
        let layout = Layout::of(self.dim);
        let mut w = RecordWriter::new("mlp");
        w.str_field("variant", self.variant.id());
        w.usize_field("dim", self.dim);
        w.f64_field("l2_factor", self.l2_factor);
        w.str_field("seed", &self.seed.to_string());
        w.f64s_field("mean", self.mean.iter().copied());
        w.f64s_field("scale", self.scale.iter().copied());
        for i in 0..H1 {
            w.f64s_field(
                &format!("w1_{i}"),
                self.params[layout.w1 + i * self.dim..layout.w1 + (i + 1) * self.dim]
                    .iter()
                    .copied(),
            );
        }
        w.f64s_field("b1", self.params[layout.b1..layout.b1 + H1].iter().copied());
        for k in 0..H2 {
            w.f64s_field(
                &format!("w2_{k}"),
                self.params[layout.w2 + k * H1..layout.w2 + (k + 1) * H1]
                    .iter()
                    .copied(),
            );
        }
        w.f64s_field("b2", self.params[layout.b2..layout.b2 + H2].iter().copied());
        for c in 0..C {
            w.f64s_field(
                &format!("w3_{c}"),
                self.params[layout.w3 + c * H2..layout.w3 + (c + 1) * H2]
                    .iter()
                    .copied(),
            );
        }
        w.f64s_field("b3", self.params[layout.b3..layout.b3 + C].iter().copied());
        w.finish()
    }

    pub(crate) fn parse(r: &mut RecordReader) -> Result<MlpModel> {
        let variant = FeatureVariant::from_id(&r.expect_str("variant")?)
            .map_err(|_| Error::parse(r.line(), "unknown feature variant"))?;
        let dim = r.expect_usize("dim")?;
        if dim != variant.dim() {
            return Err(Error::parse(r.line(), "dim does not match variant"));
        }
        let layout = Layout::of(dim);
        let l2_factor = r.expect_f64("l2_factor")?;
        let seed: u64 = r
            .expect_str("seed")?
            .parse()
            .map_err(|_| Error::parse(r.line(), "bad seed"))?;
        let mean = r.expect_f64s("mean", dim)?;
        let scale = r.expect_f64s("scale", dim)?;
        let mut params = vec![0.0; layout.total];
        for i in 0..H1 {
            let row = r.expect_f64s(&format!("w1_{i}"), dim)?;
            params[layout.w1 + i * dim..layout.w1 + (i + 1) * dim].copy_from_slice(&row);
        }
        params[layout.b1..layout.b1 + H1].copy_from_slice(&r.expect_f64s("b1", H1)?);
        for k in 0..H2 {
            let row = r.expect_f64s(&format!("w2_{k}"), H1)?;
            params[layout.w2 + k * H1..layout.w2 + (k + 1) * H1].copy_from_slice(&row);
        }
        params[layout.b2..layout.b2 + H2].copy_from_slice(&r.expect_f64s("b2", H2)?);
        for c in 0..C {
            let row = r.expect_f64s(&format!("w3_{c}"), H2)?;
            params[layout.w3 + c * H2..layout.w3 + (c + 1) * H2].copy_from_slice(&row);
        }
        params[layout.b3..layout.b3 + C].copy_from_slice(&r.expect_f64s("b3", C)?);
        MlpModel::from_parts(variant, mean, scale, params, l2_factor, seed)
    }
}

/// The full regularized training loss over a fixed (pre-split) sample, as
/// a flat-parameter objective. Public so gradient checks can exercise the
/// exact backpropagation used in training.
pub struct MlpObjective {
    layout: Layout,
    rows: Vec<f64>,
    labels: Vec<usize>,
    l2: f64,
}

impl MlpObjective {
    /// Standardizes `train` internally, exactly as training does.
    pub fn new(train: &TrainSet, l2: f64) -> MlpObjective {
        let dim = train.dim();
        let (mean, scale) = standardization_stats(train);
        let mut rows = Vec::with_capacity(train.n() * dim);
        let mut labels = Vec::with_capacity(train.n());
        for i in 0..train.n() {
            for (j, &v) in train.row(i).iter().enumerate() {
                rows.push((v - mean[j]) / scale[j]);
            }
            labels.push(train.label(i));
        }
        MlpObjective {
            layout: Layout::of(dim),
            rows,
            labels,
            l2,
        }
    }
}

impl Objective for MlpObjective {
    fn dim(&self) -> usize {
        self.layout.total
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let n = self.labels.len();
        let d = self.layout.dim;
        let mut scratch = Scratch::new();
        let mut ce_sum = 0.0;
        for i in 0..n {
            ce_sum += backward(
                &self.layout,
                x,
                &self.rows[i * d..(i + 1) * d],
                self.labels[i],
                grad,
                &mut scratch,
            );
        }
        let inv_n = 1.0 / n as f64;
        for g in grad.iter_mut() {
            *g *= inv_n;
        }
        let mut loss = ce_sum * inv_n;
        let a = self.l2 / self.layout.n_weights() as f64;
        for range in self.layout.weight_ranges() {
            for j in range {
                loss += a * x[j] * x[j];
                grad[j] += 2.0 * a * x[j];
            }
        }
        loss
    }
}

fn standardization_stats(train: &TrainSet) -> (Vec<f64>, Vec<f64>) {
    let dim = train.dim();
    let n = train.n();
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for (j, &v) in train.row(i).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = (s / (n as f64 - 1.0).max(1.0)).sqrt();
            // Zero-variance features pass through unscaled.
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Summary of one training run.
#[derive(Debug, Clone)]
pub struct MlpReport {
    /// Validation cross-entropy of the raw initialization.
    pub init_val_ce: f64,
    /// Best validation cross-entropy seen (the returned snapshot's).
    pub best_val_ce: f64,
    /// Epoch index of the best snapshot; 0 is the initialization.
    pub best_epoch: usize,
    /// Epochs actually run.
    pub epochs_run: usize,
}

/// Trains an MLP; see the module docs for the full procedure.
pub fn mlp_train(train: &TrainSet, params: &MlpParams) -> Result<(MlpModel, MlpReport)> {
    if !(0.0 < params.val_fraction && params.val_fraction < 1.0) {
        return Err(Error::config("validation fraction must be inside (0, 1)"));
    }
    if params.l2_factor < 0.0 || !params.l2_factor.is_finite() {
        return Err(Error::config("l2 factor must be finite and nonnegative"));
    }
    if params.batch_size == 0 || params.max_epochs == 0 {
        return Err(Error::config("batch size and epoch cap must be positive"));
    }
    let n = train.n();
    let n_val = ((n as f64 * params.val_fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::EmptyTrainingSet("MLP fit split"));
    }

    let dim = train.dim();
    let layout = Layout::of(dim);
    let (mean, scale) = standardization_stats(train);

    // Standardized design, row-major.
    let mut rows = vec![0.0; n * dim];
    for i in 0..n {
        for (j, &v) in train.row(i).iter().enumerate() {
            rows[i * dim + j] = (v - mean[j]) / scale[j];
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let (val_idx, fit_idx) = perm.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut fit_idx = fit_idx.to_vec();

    // Fan-in scaled symmetric uniform initialization, biases zero.
    let mut weights = vec![0.0; layout.total];
    let mut init_range = |range: std::ops::Range<usize>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for j in range {
            weights[j] = rng.gen_range(-bound..bound);
        }
    };
    init_range(layout.w1..layout.b1, dim);
    init_range(layout.w2..layout.b2, H1);
    init_range(layout.w3..layout.b3, H2);

    let val_ce = |p: &[f64]| -> f64 {
        let mut scratch = Scratch::new();
        let mut acc = 0.0;
        for &i in &val_idx {
            let x = &rows[i * dim..(i + 1) * dim];
            forward(&layout, p, x, &mut scratch.h1, &mut scratch.h2, &mut scratch.lat);
            let max = scratch.lat.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum: f64 = scratch.lat.iter().map(|&l| (l - max).exp()).sum();
            acc += max + sum.ln() - scratch.lat[train.label(i)];
        }
        acc / val_idx.len() as f64
    };

    // Step size bounded by the penalty curvature so that even extreme l2
    // factors contract the weights instead of exploding them.
    let decay = 2.0 * params.l2_factor / layout.n_weights() as f64;
    let mut lr = params.learning_rate.min(0.5 / (1.0 + decay));

    let init_val = val_ce(&weights);
    let mut best_val = init_val;
    let mut best_params = weights.clone();
    let mut best_epoch = 0usize;
    let mut epochs_since_best = 0usize;
    let mut epochs_run = 0usize;

    let mut velocity = vec![0.0; layout.total];
    let mut grad = vec![0.0; layout.total];
    let mut scratch = Scratch::new();

    'training: for epoch in 1..=params.max_epochs {
        fit_idx.shuffle(&mut rng);
        let epoch_params = weights.clone();
        let epoch_velocity = velocity.clone();

        let val = loop {
            let mut finite = true;
            'epoch: for batch in fit_idx.chunks(params.batch_size) {
                grad.fill(0.0);
                for &i in batch {
                    let ce = backward(
                        &layout,
                        &weights,
                        &rows[i * dim..(i + 1) * dim],
                        train.label(i),
                        &mut grad,
                        &mut scratch,
                    );
                    if !ce.is_finite() {
                        finite = false;
                        break 'epoch;
                    }
                }
                let inv_b = 1.0 / batch.len() as f64;
                for g in grad.iter_mut() {
                    *g *= inv_b;
                }
                for range in layout.weight_ranges() {
                    for j in range {
                        grad[j] += decay * weights[j];
                    }
                }
                for j in 0..layout.total {
                    velocity[j] = params.momentum * velocity[j] - lr * grad[j];
                    weights[j] += velocity[j];
                }
            }
            if finite {
                let v = val_ce(&weights);
                if v.is_finite() {
                    break v;
                }
            }
            // Divergence: restore the epoch, halve the step, retry.
            weights.copy_from_slice(&epoch_params);
            velocity.copy_from_slice(&epoch_velocity);
            lr *= 0.5;
            if lr < 1e-15 {
                return Err(Error::NonFinite("MLP training loss"));
            }
        };
        epochs_run = epoch;

        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_params.copy_from_slice(&weights);
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best > params.patience {
                break 'training;
            }
        }
    }

    let model = MlpModel::from_parts(
        train.variant(),
        mean,
        scale,
        best_params,
        params.l2_factor,
        params.seed,
    )?;
    Ok((
        model,
        MlpReport {
            init_val_ce: init_val,
            best_val_ce: best_val,
            best_epoch,
            epochs_run,
        },
    ))
}
