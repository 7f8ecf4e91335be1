//! Gradient-boosted trees over the nine-class softmax objective.
//!
//! Nine per-class latent scores start at the log training class
//! frequencies (floored at 1e-9). Each boosting round fits one regression
//! tree per class to the second-order statistics of the round-start
//! latents (gradient p - 1{y=c}, hessian p(1-p)), then adds the ridge-
//! damped leaf steps scaled by the learning rate. Validation mean
//! cross-entropy is tracked per round; fitting stops once it has not
//! improved for `early_stop_rounds` consecutive rounds (or at
//! `max_rounds`), and only the trees up to the best round are kept.
//! Predictions are the softmax of the accumulated latents.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::features::FeatureVariant;
use crate::okta::N_CLASSES;
use crate::pmf::Pmf;
use crate::Result;

use super::cart::{grow_with_columns, CartParams, CartTarget, CartTree, SortedColumns};
use super::forest::{read_tree, write_tree};
use super::record::{RecordReader, RecordWriter};
use super::{softmax_pmf, TrainSet};

const FREQ_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub depth: usize,
    pub learning_rate: f64,
    pub early_stop_rounds: usize,
    pub max_rounds: usize,
    pub min_leaf: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            depth: 1,
            learning_rate: 0.1,
            early_stop_rounds: 25,
            max_rounds: 1000,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbmReport {
    /// Round whose validation cross-entropy was best; trees are kept up
    /// to this round.
    pub best_round: usize,
    pub rounds_run: usize,
    pub best_val_ce: f64,
    /// Validation mean cross-entropy after each round (1-based rounds).
    pub val_trace: Vec<f64>,
    /// Training mean cross-entropy after each round.
    pub train_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    variant: FeatureVariant,
    dim: usize,
    depth: usize,
    learning_rate: f64,
    base_scores: [f64; N_CLASSES],
    /// One tree sequence per class; all sequences share the same length.
    trees: Vec<Vec<CartTree>>,
}

impl GbmModel {
    pub fn from_parts(
        variant: FeatureVariant,
        depth: usize,
        learning_rate: f64,
        base_scores: [f64; N_CLASSES],
        trees: Vec<Vec<CartTree>>,
    ) -> Result<GbmModel> {
        if trees.len() != N_CLASSES {
            return Err(Error::config("expected one tree sequence per class"));
        }
        if trees.iter().any(|seq| seq.len() != trees[0].len()) {
            return Err(Error::config("per-class tree sequences must share a length"));
        }
        if base_scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("GBM base score"));
        }
        Ok(GbmModel {
            variant,
            dim: variant.dim(),
            depth,
            learning_rate,
            base_scores,
            trees,
        })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    /// Boosting rounds kept.
    pub fn rounds(&self) -> usize {
        self.trees[0].len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn base_scores(&self) -> &[f64; N_CLASSES] {
        &self.base_scores
    }

    pub fn trees(&self) -> &[Vec<CartTree>] {
        &self.trees
    }

    fn latents(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let mut lat = self.base_scores;
        for c in 0..N_CLASSES {
            let mut acc = 0.0;
            for tree in &self.trees[c] {
                acc += tree.predict_value(row);
            }
            lat[c] += self.learning_rate * acc;
        }
        lat
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Pmf> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "GBM feature row",
                expected: self.dim,
                got: row.len(),
            });
        }
        Ok(softmax_pmf(&self.latents(row)))
    }

    pub fn to_record(&self) -> String {
        let mut w = RecordWriter::new("gbm");
        w.str_field("variant", self.variant.id());
        w.usize_field("dim", self.dim);
        w.usize_field("depth", self.depth);
        w.f64_field("learning_rate", self.learning_rate);
        w.usize_field("rounds", self.rounds());
        w.f64s_field("base_scores", self.base_scores.iter().copied());
        for seq in &self.trees {
            for tree in seq {
                write_tree(&mut w, tree);
            }
        }
        w.finish()
    }

    pub(crate) fn parse(r: &mut RecordReader) -> Result<GbmModel> {
        let variant = FeatureVariant::from_id(&r.expect_str("variant")?)
            .map_err(|_| Error::parse(r.line(), "unknown feature variant"))?;
        let dim = r.expect_usize("dim")?;
        if dim != variant.dim() {
            return Err(Error::parse(r.line(), "dim does not match variant"));
        }
        let depth = r.expect_usize("depth")?;
        let learning_rate = r.expect_f64("learning_rate")?;
        let rounds = r.expect_usize("rounds")?;
        let base = r.expect_f64s("base_scores", N_CLASSES)?;
        let mut base_scores = [0.0; N_CLASSES];
        base_scores.copy_from_slice(&base);
        let mut trees = Vec::with_capacity(N_CLASSES);
        for _ in 0..N_CLASSES {
            let mut seq = Vec::with_capacity(rounds);
            for _ in 0..rounds {
                seq.push(read_tree(r)?);
            }
            trees.push(seq);
        }
        GbmModel::from_parts(variant, depth, learning_rate, base_scores, trees)
    }
}

fn validate(params: &GbmParams) -> Result<()> {
    if !params.learning_rate.is_finite() || params.learning_rate < 0.0 {
        return Err(Error::config("learning rate must be finite and nonnegative"));
    }
    if params.max_rounds == 0 {
        return Err(Error::config("max_rounds must be at least 1"));
    }
    Ok(())
}

fn base_scores_of(train: &TrainSet) -> [f64; N_CLASSES] {
    let freqs = train.class_frequencies();
    let mut scores = [0.0; N_CLASSES];
    for c in 0..N_CLASSES {
        scores[c] = freqs[c].max(FREQ_FLOOR).ln();
    }
    scores
}

/// Per-sample latent table with helpers shared by fit and evaluation.
struct Latents {
    values: Vec<f64>,
    n: usize,
}

impl Latents {
    fn new(n: usize, base: &[f64; N_CLASSES]) -> Latents {
        let mut values = Vec::with_capacity(n * N_CLASSES);
        for _ in 0..n {
            values.extend_from_slice(base);
        }
        Latents { values, n }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * N_CLASSES..(i + 1) * N_CLASSES]
    }

    /// Mean cross-entropy against the set's labels.
    fn mean_ce(&self, set: &TrainSet) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let row = self.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            acc += max + sum.ln() - row[set.label(i)];
        }
        acc / self.n as f64
    }

    /// Writes per-class gradients and hessians of the current state.
    fn grads(&self, set: &TrainSet, g: &mut [Vec<f64>], h: &mut [Vec<f64>]) {
        let mut probs = [0.0f64; N_CLASSES];
        for i in 0..self.n {
            let row = self.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for c in 0..N_CLASSES {
                probs[c] = (row[c] - max).exp();
                sum += probs[c];
            }
            let label = set.label(i);
            for c in 0..N_CLASSES {
                let p = probs[c] / sum;
                g[c][i] = p - if c == label { 1.0 } else { 0.0 };
                h[c][i] = p * (1.0 - p);
            }
        }
    }

    fn apply(&mut self, set: &TrainSet, class: usize, tree: &CartTree, rate: f64) {
        for i in 0..self.n {
            self.values[i * N_CLASSES + class] += rate * tree.predict_value(set.row(i));
        }
    }
}

struct Booster<'a> {
    train: &'a TrainSet,
    columns: SortedColumns,
    cart: CartParams,
    rate: f64,
    base: [f64; N_CLASSES],
    latents: Latents,
    g: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    trees: Vec<Vec<CartTree>>,
}

impl<'a> Booster<'a> {
    fn new(train: &'a TrainSet, params: &GbmParams) -> Result<Booster<'a>> {
        if train.n() == 0 {
            return Err(Error::EmptyTrainingSet("GBM fit"));
        }
        let base = base_scores_of(train);
        Ok(Booster {
            train,
            columns: SortedColumns::new(train),
            cart: CartParams {
                max_depth: params.depth,
                mtry: train.dim(),
                min_leaf: params.min_leaf,
            },
            rate: params.learning_rate,
            base,
            latents: Latents::new(train.n(), &base),
            g: vec![vec![0.0; train.n()]; N_CLASSES],
            h: vec![vec![0.0; train.n()]; N_CLASSES],
            trees: vec![Vec::new(); N_CLASSES],
        })
    }

    /// Fits the nine trees of one round from the round-start latents and
    /// applies them.
    fn round(&mut self) -> Result<Vec<CartTree>> {
        self.latents.grads(self.train, &mut self.g, &mut self.h);
        let mut rng = ChaCha12Rng::seed_from_u64(0); // all features tried; never consumed
        let mut round_trees = Vec::with_capacity(N_CLASSES);
        for c in 0..N_CLASSES {
            let tree = grow_with_columns(
                self.train,
                &self.columns,
                &CartTarget::SecondOrder {
                    g: &self.g[c],
                    h: &self.h[c],
                },
                None,
                &self.cart,
                &mut rng,
            )?;
            round_trees.push(tree);
        }
        for (c, tree) in round_trees.iter().enumerate() {
            self.latents.apply(self.train, c, tree, self.rate);
            self.trees[c].push(tree.clone());
        }
        Ok(round_trees)
    }

    fn finish(self, depth: usize, best_round: usize) -> Result<GbmModel> {
        let trees: Vec<Vec<CartTree>> = self
            .trees
            .into_iter()
            .map(|mut seq| {
                seq.truncate(best_round);
                seq
            })
            .collect();
        GbmModel::from_parts(self.train.variant(), depth, self.rate, self.base, trees)
    }
}

/// Boosts with validation-based early stopping; see the module docs.
pub fn gbm_fit(train: &TrainSet, val: &TrainSet, params: &GbmParams) -> Result<(GbmModel, GbmReport)> {
    validate(params)?;
    if val.n() == 0 {
        return Err(Error::EmptyTrainingSet("GBM validation set"));
    }
    if val.variant() != train.variant() {
        return Err(Error::config("train and validation feature variants differ"));
    }
    let mut booster = Booster::new(train, params)?;
    let mut val_latents = Latents::new(val.n(), &booster.base);

    let mut val_trace = Vec::new();
    let mut train_trace = Vec::new();
    let mut best_round = 0usize;
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    let mut rounds_run = 0usize;

    for round in 1..=params.max_rounds {
        let round_trees = booster.round()?;
        for (c, tree) in round_trees.iter().enumerate() {
            val_latents.apply(val, c, tree, params.learning_rate);
        }
        rounds_run = round;
        train_trace.push(booster.latents.mean_ce(train));
        let val_ce = val_latents.mean_ce(val);
        val_trace.push(val_ce);
        if round == 1 || val_ce < best_val {
            best_val = val_ce;
            best_round = round;
            stale = 0;
        } else {
            stale += 1;
            if stale == params.early_stop_rounds {
                break;
            }
        }
    }

    let model = booster.finish(params.depth, best_round)?;
    Ok((
        model,
        GbmReport {
            best_round,
            rounds_run,
            best_val_ce: best_val,
            val_trace,
            train_trace,
        },
    ))
}

/// Boosts for exactly `rounds` rounds with no validation set; used to
/// refit on a full window once the round count has been tuned.
pub fn gbm_fit_fixed(train: &TrainSet, params: &GbmParams, rounds: usize) -> Result<GbmModel> {
    validate(params)?;
    if rounds == 0 {
        return Err(Error::config("fixed-round fit needs at least one round"));
    }
    let mut booster = Booster::new(train, params)?;
    for _ in 0..rounds {
        booster.round()?;
    }
    booster.finish(params.depth, rounds)
}
