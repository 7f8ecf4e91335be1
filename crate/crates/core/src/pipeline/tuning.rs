//! Per-window hyperparameter selection for the tree ensembles.
//!
//! Both protocols split a training window into its leading years and its
//! last calendar year, fit candidates on the leading part and score them
//! on the last year by mean log score. Random forests are tuned once per
//! station and lead time on the first window, with 300-tree candidate
//! forests and a 1000-tree final configuration; gradient boosting
//! re-tunes its tree depth on every window and refits on the full window
//! with the early-stopped round count.

use chrono::{Datelike, NaiveDate};

use crate::error::Error;
use crate::models::{gbm_fit, gbm_fit_fixed, rf_fit, GbmModel, GbmParams, RfParams, TrainSet};
use crate::verify::scores::{floor_pmf, log_score};
use crate::Result;

/// A training window's design matrix together with its dates.
#[derive(Debug, Clone)]
pub struct WindowData {
    set: TrainSet,
    dates: Vec<NaiveDate>,
}

impl WindowData {
    pub fn new(set: TrainSet, dates: Vec<NaiveDate>) -> Result<WindowData> {
        if dates.len() != set.n() {
            return Err(Error::DimensionMismatch {
                what: "window dates vs rows",
                expected: set.n(),
                got: dates.len(),
            });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("window dates must strictly increase"));
        }
        Ok(WindowData { set, dates })
    }

    pub fn set(&self) -> &TrainSet {
        &self.set
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Splits off the last calendar year as a validation set. Returns
    /// (leading years, last year, leading-part day count).
    fn split_last_year(&self) -> Result<(TrainSet, TrainSet, usize)> {
        let last_year = self.dates.last().expect("validated non-empty").year();
        let (mut head, mut tail) = (Vec::new(), Vec::new());
        for (i, d) in self.dates.iter().enumerate() {
            if d.year() == last_year {
                tail.push(i);
            } else {
                head.push(i);
            }
        }
        if head.is_empty() {
            return Err(Error::InsufficientHistory(
                "tuning needs at least two calendar years in the window".to_owned(),
            ));
        }
        let days = head.len();
        Ok((self.set.subset(&head), self.set.subset(&tail), days))
    }
}

/// Mean floored log score of a model over a validation set.
fn val_log_score<F>(predict: F, val: &TrainSet, train_days: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<crate::Pmf>,
{
    let mut total = 0.0;
    for i in 0..val.n() {
        let pmf = predict(val.row(i))?;
        let floored = floor_pmf(&pmf, train_days);
        let obs = crate::Okta::new(val.label(i))?;
        total += log_score(&floored, obs)?;
    }
    Ok(total / val.n() as f64)
}

/// Random-forest candidate grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfGrid {
    pub depths: Vec<usize>,
    pub mtrys: Vec<usize>,
    pub tune_trees: usize,
    pub final_trees: usize,
}

impl Default for RfGrid {
    fn default() -> Self {
        RfGrid {
            depths: vec![2, 3, 4],
            mtrys: vec![1, 2, 3],
            tune_trees: 300,
            final_trees: 1000,
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, Copy)]
pub struct RfEval {
    pub depth: usize,
    pub mtry: usize,
    pub val_logs: f64,
}

/// Selects (depth, mtry) on the window's last year and returns the full
/// grid evaluation alongside the winning parameters.
pub fn tune_rf_traced(
    window: &WindowData,
    grid: &RfGrid,
    seed: u64,
) -> Result<(RfParams, Vec<RfEval>)> {
    if grid.depths.is_empty() || grid.mtrys.is_empty() {
        return Err(Error::config("empty random-forest tuning grid"));
    }
    if grid.tune_trees == 0 || grid.final_trees == 0 {
        return Err(Error::config("tuning tree counts must be positive"));
    }
    let (train, val, train_days) = window.split_last_year()?;
    let mut evals = Vec::new();
    let mut best: Option<(usize, usize, f64)> = None;
    for &depth in &grid.depths {
        for &mtry in &grid.mtrys {
            let params = RfParams {
                n_trees: grid.tune_trees,
                depth,
                mtry,
                min_leaf: 1,
                seed: crate::pipeline::stable_seed(seed, &["rf-tune", &depth.to_string(), &mtry.to_string()]),
            };
            let model = rf_fit(&train, &params)?;
            let score = val_log_score(|row| model.predict_row(row), &val, train_days)?;
            evals.push(RfEval {
                depth,
                mtry,
                val_logs: score,
            });
            // Strict improvement keeps the first (lexicographically
            // smallest) cell on ties.
            if best.map_or(true, |(_, _, b)| score < b) {
                best = Some((depth, mtry, score));
            }
        }
    }
    let (depth, mtry, _) = best.expect("non-empty grid evaluated");
    let params = RfParams {
        n_trees: grid.final_trees,
        depth,
        mtry,
        min_leaf: 1,
        seed,
    };
    Ok((params, evals))
}

/// As [`tune_rf_traced`], returning only the chosen parameters (1000-tree
/// configuration, to be reused across all windows of the station).
pub fn tune_rf(window: &WindowData, grid: &RfGrid, seed: u64) -> Result<RfParams> {
    tune_rf_traced(window, grid, seed).map(|(p, _)| p)
}

/// Gradient-boosting candidate depths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GbmGrid {
    pub depths: Vec<usize>,
}

impl Default for GbmGrid {
    fn default() -> Self {
        GbmGrid {
            depths: vec![1, 2, 3, 4],
        }
    }
}

/// The tuning outcome for one window.
#[derive(Debug, Clone, Copy)]
pub struct GbmChoice {
    pub depth: usize,
    pub rounds: usize,
    pub val_logs: f64,
}

/// One evaluated depth: its early-stopped round count and score.
pub type GbmEval = GbmChoice;

/// Tunes depth by early-stopped validation log score, then refits on the
/// full window with the winning (depth, rounds).
pub fn tune_gbm_traced(
    window: &WindowData,
    grid: &GbmGrid,
    base: &GbmParams,
) -> Result<(GbmModel, GbmChoice, Vec<GbmEval>)> {
    if grid.depths.is_empty() {
        return Err(Error::config("empty boosting depth grid"));
    }
    let (train, val, _) = window.split_last_year()?;
    let mut evals = Vec::new();
    let mut best: Option<GbmChoice> = None;
    for &depth in &grid.depths {
        let params = GbmParams { depth, ..*base };
        let (_, report) = gbm_fit(&train, &val, &params)?;
        let choice = GbmChoice {
            depth,
            rounds: report.best_round,
            val_logs: report.best_val_ce,
        };
        evals.push(choice);
        if best.map_or(true, |b| choice.val_logs < b.val_logs) {
            best = Some(choice);
        }
    }
    let choice = best.expect("non-empty grid evaluated");
    let params = GbmParams {
        depth: choice.depth,
        ..*base
    };
    let model = gbm_fit_fixed(window.set(), &params, choice.rounds)?;
    Ok((model, choice, evals))
}

pub fn tune_gbm(
    window: &WindowData,
    grid: &GbmGrid,
    base: &GbmParams,
) -> Result<(GbmModel, GbmChoice)> {
    tune_gbm_traced(window, grid, base).map(|(m, c, _)| (m, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVariant;
    use crate::okta::Okta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn daily_dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2002, 1, 1).unwrap();
        (0..n)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect()
    }

    /// Labels driven by feature 1 only; all other columns are noise.
    fn single_feature_window(n: usize, seed: u64) -> WindowData {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..6).map(|_| rng.gen::<f64>()).collect();
            let noisy = (row[1] + 0.08 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 0.999);
            labels.push(Okta::new((noisy * 9.0) as usize).unwrap());
            rows.push(row);
        }
        let set = TrainSet::from_rows(FeatureVariant::Mlr6, &rows, &labels).unwrap();
        WindowData::new(set, daily_dates(n)).unwrap()
    }

    #[test]
    fn rf_winner_beats_every_other_cell() {
        let window = single_feature_window(730, 5);
        let grid = RfGrid {
            tune_trees: 60,
            final_trees: 80,
            ..RfGrid::default()
        };
        let (params, evals) = tune_rf_traced(&window, &grid, 11).unwrap();
        let winner = evals
            .iter()
            .find(|e| e.depth == params.depth && e.mtry == params.mtry)
            .unwrap();
        assert_eq!(evals.len(), 9);
        for e in &evals {
            assert!(winner.val_logs <= e.val_logs);
        }
        assert_eq!(params.n_trees, grid.final_trees);
    }

    #[test]
    fn rf_single_cell_grid_is_returned_unchanged() {
        let window = single_feature_window(400, 6);
        let grid = RfGrid {
            depths: vec![3],
            mtrys: vec![2],
            tune_trees: 20,
            final_trees: 50,
        };
        let params = tune_rf(&window, &grid, 3).unwrap();
        assert_eq!((params.depth, params.mtry), (3, 2));
    }

    #[test]
    fn rf_ties_break_toward_the_lexicographic_smallest_cell() {
        // Single-class labels: every forest predicts the same point mass,
        // so all grid cells tie exactly.
        let n = 400;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i % 10) as f64; 6]).collect();
        let labels = vec![Okta::new(4).unwrap(); n];
        let set = TrainSet::from_rows(FeatureVariant::Mlr6, &rows, &labels).unwrap();
        let window = WindowData::new(set, daily_dates(n)).unwrap();
        let grid = RfGrid {
            tune_trees: 10,
            final_trees: 10,
            ..RfGrid::default()
        };
        let params = tune_rf(&window, &grid, 2).unwrap();
        assert_eq!((params.depth, params.mtry), (2, 1));
    }

    #[test]
    fn one_year_window_cannot_be_tuned() {
        let window = single_feature_window(300, 9);
        let err = tune_rf(&window, &RfGrid::default(), 1);
        assert!(matches!(err, Err(Error::InsufficientHistory(_))));
        let err = tune_gbm(&window, &GbmGrid::default(), &GbmParams::default());
        assert!(matches!(err, Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn empty_grids_are_rejected() {
        let window = single_feature_window(500, 10);
        let grid = RfGrid {
            depths: vec![],
            ..RfGrid::default()
        };
        assert!(matches!(
            tune_rf(&window, &grid, 1),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            tune_gbm(&window, &GbmGrid { depths: vec![] }, &GbmParams::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn gbm_noise_labels_choose_depth_one() {
        // Pure-noise labels: every boosted tree only fits sampling noise,
        // and the damage grows with depth because finer partitions have
        // noisier leaf values. A small head year (noisy leaves, cleanly
        // separated penalties) and a full validation year (concentrated
        // CE estimates) make the stump win outright.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 60 + 365;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..7).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let labels: Vec<Okta> = (0..n)
            .map(|_| Okta::new(rng.gen_range(0..9)).unwrap())
            .collect();
        let set = TrainSet::from_rows(FeatureVariant::Full7, &rows, &labels).unwrap();
        let start = NaiveDate::from_ymd_opt(2001, 11, 2).unwrap();
        let dates: Vec<NaiveDate> = (0..n)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        assert_eq!(dates.last().unwrap().year(), 2002);
        let window = WindowData::new(set, dates).unwrap();
        let base = GbmParams {
            max_rounds: 120,
            ..GbmParams::default()
        };
        let (_, choice, evals) = tune_gbm_traced(&window, &GbmGrid::default(), &base).unwrap();
        assert_eq!(choice.depth, 1);
        for e in &evals {
            assert!(choice.val_logs <= e.val_logs);
        }
    }

    #[test]
    fn gbm_interaction_data_needs_depth_two() {
        // XOR of two indicators: no stump has any gain, a depth-2 tree
        // separates the classes.
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let n = 600;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rng.gen::<f64>();
            let b = rng.gen::<f64>();
            let noise: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let xor = (a > 0.5) != (b > 0.5);
            labels.push(Okta::new(if xor { 7 } else { 2 }).unwrap());
            let mut row = vec![a, b];
            row.extend(noise);
            row.push(0.5);
            rows.push(row);
        }
        let set = TrainSet::from_rows(FeatureVariant::Full7, &rows, &labels).unwrap();
        let window = WindowData::new(set, daily_dates(n)).unwrap();
        let base = GbmParams {
            max_rounds: 150,
            ..GbmParams::default()
        };
        let (model, choice) = tune_gbm(&window, &GbmGrid::default(), &base).unwrap();
        assert!(choice.depth >= 2, "chose depth {}", choice.depth);
        assert_eq!(model.rounds(), choice.rounds);
    }

    #[test]
    fn gbm_single_depth_grid_returns_its_early_stop() {
        let window = single_feature_window(500, 40);
        let base = GbmParams {
            max_rounds: 60,
            ..GbmParams::default()
        };
        let (model, choice) =
            tune_gbm(&window, &GbmGrid { depths: vec![2] }, &base).unwrap();
        assert_eq!(choice.depth, 2);
        assert!(choice.rounds >= 1 && choice.rounds <= 60);
        assert_eq!(model.rounds(), choice.rounds);
        assert_eq!(model.depth(), 2);
    }
}
