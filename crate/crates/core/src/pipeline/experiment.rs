//! The experiment driver over the (station, lead, method, window) grid.
//!
//! For every selected station and lead time, each configured method is
//! trained per rolling window and scored on the window's test year:
//! CRPS on the raw predictive pmf, log score on the floored pmf (with
//! the floor's `T` equal to the actual number of training days of that
//! fit), plus a randomized PIT value per case. The raw ensemble is always
//! scored as the baseline. Failures are collected per task and window,
//! never aborting the run; tree-ensemble tuning decisions are recorded
//! as provenance. Output order and every random draw derive from the
//! configuration seed alone, so reruns are bit-identical.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{StationDataset, StationSeries};
use crate::error::Error;
use crate::features::{extract_features, FeatureVariant};
use crate::forecast::{EnsembleForecast, StationId};
use crate::models::{
    mlp_train, mlr_fit, polr_fit, rf_fit, FitConfig, GbmParams, MlpParams, Model, RfParams,
    TrainSet,
};
use crate::okta::Okta;
use crate::pipeline::stable_seed;
use crate::pipeline::tuning::{tune_gbm, tune_rf, GbmGrid, RfGrid, WindowData};
use crate::pipeline::windows::{rolling_windows, SchemeKind, TrainingScheme};
use crate::verify::pit::pit_value;
use crate::verify::scores::{crps, floor_pmf, log_score};
use crate::verify::{ScoreKind, ScoreSeries, SeriesKey};
use crate::Result;

/// Method id of the always-scored raw-ensemble baseline.
pub const RAW_METHOD: &str = "RAW";

/// Cap on boosting rounds during tuning and refits. Early stopping at 25
/// stale rounds almost always fires first; the cap bounds the worst case.
const GBM_MAX_ROUNDS: usize = 400;

/// The five classifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Mlr,
    Polr,
    Mlp,
    Rf,
    Gbm,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Mlr,
        Family::Polr,
        Family::Mlp,
        Family::Rf,
        Family::Gbm,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::Mlr => "MLR",
            Family::Polr => "POLR",
            Family::Mlp => "MLP",
            Family::Rf => "RF",
            Family::Gbm => "GBM",
        }
    }
}

/// One configured method: a family, a training scheme, and whether the
/// precipitation covariate is added. Named like `MLR`, `POLRS`, `GBMS-P`:
/// trailing `S` marks seasonal training, `-P` the extended feature set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodSpec {
    pub family: Family,
    pub seasonal: bool,
    pub precip: bool,
}

impl MethodSpec {
    pub fn parse(name: &str) -> Result<MethodSpec> {
        let trimmed = name.trim();
        if trimmed == RAW_METHOD {
            return Err(Error::config(
                "the raw ensemble is always scored; do not list RAW as a method",
            ));
        }
        let (rest, precip) = match trimmed.strip_suffix("-P") {
            Some(r) => (r, true),
            None => (trimmed, false),
        };
        for family in Family::ALL {
            if rest == family.id() {
                return Ok(MethodSpec {
                    family,
                    seasonal: false,
                    precip,
                });
            }
            if rest.strip_suffix('S') == Some(family.id()) {
                return Ok(MethodSpec {
                    family,
                    seasonal: true,
                    precip,
                });
            }
        }
        Err(Error::config(format!(
            "unknown method {name:?} (expected a family like \"MLR\" with optional \
             seasonal suffix \"S\" and precipitation suffix \"-P\", e.g. \"GBMS-P\")"
        )))
    }

    pub fn id(&self) -> String {
        format!(
            "{}{}{}",
            self.family.id(),
            if self.seasonal { "S" } else { "" },
            if self.precip { "-P" } else { "" }
        )
    }

    /// Covariate set: MLR drops the interaction term, the precipitation
    /// variants append the precipitation mean.
    pub fn variant(&self) -> FeatureVariant {
        if self.precip {
            FeatureVariant::Extended8
        } else if self.family == Family::Mlr {
            FeatureVariant::Mlr6
        } else {
            FeatureVariant::Full7
        }
    }

    pub fn scheme_kind(&self) -> SchemeKind {
        if self.seasonal {
            SchemeKind::Seasonal
        } else {
            SchemeKind::NonSeasonal
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Declarative experiment description; TOML-loadable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Method names; may be empty for a raw-ensemble-only run.
    pub methods: Vec<String>,
    /// Reference method for downstream skill scores; `RAW` or a method.
    pub reference: String,
    /// Subset of the dataset's lead times; `None` means all.
    pub lead_times: Option<Vec<u8>>,
    /// Subset of station ids; `None` means all.
    pub stations: Option<Vec<String>>,
    pub window_years: usize,
    pub seed: u64,
    /// Serialize each task's final-window model into the output.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: Family::ALL.iter().map(|f| f.id().to_owned()).collect(),
            reference: RAW_METHOD.to_owned(),
            lead_times: None,
            stations: None,
            window_years: 5,
            seed: 20231,
            save_models: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses and cross-checks the method list.
    pub fn validate(&self) -> Result<Vec<MethodSpec>> {
        let mut specs: Vec<MethodSpec> = Vec::new();
        for name in &self.methods {
            let spec = MethodSpec::parse(name)?;
            if specs.contains(&spec) {
                return Err(Error::config(format!("duplicate method {}", spec.id())));
            }
            specs.push(spec);
        }
        if self.reference != RAW_METHOD && !specs.iter().any(|s| s.id() == self.reference) {
            return Err(Error::config(format!(
                "reference {:?} is not among the methods",
                self.reference
            )));
        }
        if self.window_years == 0 {
            return Err(Error::config("window_years must be at least 1"));
        }
        if let Some(leads) = &self.lead_times {
            if leads.is_empty() {
                return Err(Error::config("lead_times must not be empty when given"));
            }
            if leads.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("lead_times must be strictly increasing"));
            }
        }
        if let Some(stations) = &self.stations {
            if stations.is_empty() {
                return Err(Error::config("stations must not be empty when given"));
            }
            let unique: BTreeSet<&String> = stations.iter().collect();
            if unique.len() != stations.len() {
                return Err(Error::config("duplicate station in the station list"));
            }
        }
        Ok(specs)
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("experiment config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Per-case randomized PIT values of one (station, lead, method), in the
/// same date order as the task's score series.
#[derive(Debug, Clone, PartialEq)]
pub struct PitSeries {
    pub station: StationId,
    pub lead_time: u8,
    pub method: String,
    pub values: Vec<f64>,
}

/// One recorded per-task or per-window failure.
#[derive(Debug, Clone)]
pub struct TaskFailure {
    pub station: StationId,
    pub lead_time: u8,
    pub method: String,
    /// Split ordinal within the task; `None` for task-level failures.
    pub window: Option<usize>,
    pub message: String,
}

/// Tuning decisions, proving the RF-reuse / GBM-retune protocols ran.
#[derive(Debug, Clone)]
pub struct ProvenanceRecord {
    pub station: StationId,
    pub lead_time: u8,
    pub method: String,
    pub detail: TuneDetail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneDetail {
    /// One pair tuned on the first window, reused for all `windows` splits.
    RfReuse {
        depth: usize,
        mtry: usize,
        windows: usize,
    },
    /// A per-window boosting re-tune.
    GbmWindow {
        window: usize,
        depth: usize,
        rounds: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub scores: Vec<ScoreSeries>,
    pub pit: Vec<PitSeries>,
    pub provenance: Vec<ProvenanceRecord>,
    pub failures: Vec<TaskFailure>,
    /// (file stem, record text) of final-window models when requested.
    pub models: Vec<(String, String)>,
}

struct TaskSpec<'a> {
    series: &'a StationSeries,
    lead: u8,
    lead_idx: usize,
    method: Option<MethodSpec>,
}

#[derive(Default)]
struct TaskOutput {
    scores: Vec<ScoreSeries>,
    pit: Vec<PitSeries>,
    provenance: Vec<ProvenanceRecord>,
    failures: Vec<TaskFailure>,
    models: Vec<(String, String)>,
}

/// Runs the full experiment grid. Per-task failures are collected in the
/// output; only configuration and dataset mismatches abort the run.
pub fn run_experiment(
    dataset: &StationDataset,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let specs = config.validate()?;
    if specs.iter().any(|s| s.precip) && !dataset.has_precip() {
        return Err(Error::MissingCovariate(
            "precipitation-extended methods need precipitation in the dataset",
        ));
    }

    let stations: Vec<&StationSeries> = match &config.stations {
        None => dataset.stations().iter().collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                dataset
                    .station(&StationId::from(id.as_str()))
                    .ok_or_else(|| Error::config(format!("station {id:?} not in dataset")))
            })
            .collect::<Result<_>>()?,
    };
    let leads: Vec<(u8, usize)> = match &config.lead_times {
        None => dataset
            .lead_times()
            .iter()
            .map(|&l| (l, dataset.lead_index(l).expect("own lead")))
            .collect(),
        Some(ls) => ls
            .iter()
            .map(|&l| {
                dataset
                    .lead_index(l)
                    .map(|i| (l, i))
                    .ok_or_else(|| Error::config(format!("lead time {l} not in dataset")))
            })
            .collect::<Result<_>>()?,
    };
    if stations.is_empty() {
        return Err(Error::config("dataset has no stations"));
    }

    let mut tasks = Vec::new();
    for series in &stations {
        for &(lead, lead_idx) in &leads {
            tasks.push(TaskSpec {
                series,
                lead,
                lead_idx,
                method: None,
            });
            for spec in &specs {
                tasks.push(TaskSpec {
                    series,
                    lead,
                    lead_idx,
                    method: Some(*spec),
                });
            }
        }
    }

    let outputs: Vec<TaskOutput> = tasks.par_iter().map(|t| run_task(t, config)).collect();

    let mut out = ExperimentOutput::default();
    for o in outputs {
        out.scores.extend(o.scores);
        out.pit.extend(o.pit);
        out.provenance.extend(o.provenance);
        out.failures.extend(o.failures);
        out.models.extend(o.models);
    }
    // Canonical output order, independent of task scheduling.
    out.scores
        .sort_by(|a, b| (a.key(), a.method()).cmp(&(b.key(), b.method())));
    out.pit
        .sort_by(|a, b| task_key(&a.station, a.lead_time, &a.method).cmp(&task_key(
            &b.station,
            b.lead_time,
            &b.method,
        )));
    out.provenance.sort_by(|a, b| {
        (task_key(&a.station, a.lead_time, &a.method), detail_window(&a.detail))
            .cmp(&(task_key(&b.station, b.lead_time, &b.method), detail_window(&b.detail)))
    });
    out.failures.sort_by(|a, b| {
        (task_key(&a.station, a.lead_time, &a.method), a.window)
            .cmp(&(task_key(&b.station, b.lead_time, &b.method), b.window))
    });
    out.models.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn task_key<'a>(
    station: &'a StationId,
    lead: u8,
    method: &'a str,
) -> (&'a StationId, u8, &'a str) {
    (station, lead, method)
}

fn detail_window(detail: &TuneDetail) -> usize {
    match detail {
        TuneDetail::RfReuse { .. } => 0,
        TuneDetail::GbmWindow { window, .. } => *window,
    }
}

struct Case<'a> {
    date: NaiveDate,
    obs: Okta,
    forecast: &'a EnsembleForecast,
    row: Vec<f64>,
}

fn run_task(task: &TaskSpec<'_>, config: &ExperimentConfig) -> TaskOutput {
    let mut out = TaskOutput::default();
    if let Err(e) = run_task_inner(task, config, &mut out) {
        out.failures.push(TaskFailure {
            station: task.series.id().clone(),
            lead_time: task.lead,
            method: method_id(task),
            window: None,
            message: e.to_string(),
        });
    }
    out
}

fn method_id(task: &TaskSpec<'_>) -> String {
    task.method
        .map_or_else(|| RAW_METHOD.to_owned(), |m| m.id())
}

fn run_task_inner(
    task: &TaskSpec<'_>,
    config: &ExperimentConfig,
    out: &mut TaskOutput,
) -> Result<()> {
    let station = task.series.id().clone();
    let method = method_id(task);
    let lead_str = task.lead.to_string();
    let seed_for = |window: &str, what: &str| {
        stable_seed(config.seed, &[&station.0, &lead_str, &method, window, what])
    };

    let variant = task.method.map(|m| m.variant());
    let mut cases = Vec::new();
    for record in task.series.records() {
        if let Some(forecast) = record.forecast(task.lead_idx) {
            let row = match variant {
                Some(v) => extract_features(forecast).to_vec(v)?,
                None => Vec::new(),
            };
            cases.push(Case {
                date: record.date(),
                obs: record.obs(),
                forecast,
                row,
            });
        }
    }
    if cases.is_empty() {
        return Err(Error::InsufficientHistory(
            "no forecasts at this lead time".to_owned(),
        ));
    }
    let dates: Vec<NaiveDate> = cases.iter().map(|c| c.date).collect();
    let scheme = TrainingScheme {
        kind: task
            .method
            .map_or(SchemeKind::NonSeasonal, |m| m.scheme_kind()),
        window_years: config.window_years,
    };
    let splits = rolling_windows(&dates, &scheme)?;
    if splits.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no test year after {} training years",
            config.window_years
        )));
    }
    let case_at = |d: NaiveDate| -> usize {
        dates
            .binary_search(&d)
            .expect("split dates are drawn from the available dates")
    };

    let mut pit_rng = ChaCha12Rng::seed_from_u64(seed_for("", "pit"));
    let mut rf_params: Option<RfParams> = None;
    let mut collected: Vec<(NaiveDate, f64, f64, f64)> = Vec::new();
    let mut last_model: Option<Model> = None;

    for (split_no, split) in splits.iter().enumerate() {
        let window_tag = split_no.to_string();
        let result: Result<()> = (|| {
            let t_days = split.train_dates.len();
            let model = match task.method {
                None => None,
                Some(spec) => Some(fit_window_model(
                    spec,
                    split.train_dates.as_slice(),
                    &cases,
                    case_at,
                    &mut rf_params,
                    splits.len(),
                    split_no,
                    &seed_for(&window_tag, ""),
                    seed_for("", "rf-tune"),
                    out,
                    (&station, task.lead, &method),
                )?),
            };
            let mut window_scores = Vec::with_capacity(split.test_dates.len());
            for &d in &split.test_dates {
                let case = &cases[case_at(d)];
                let pmf = match &model {
                    Some(m) => m.predict_row(&case.row)?,
                    None => case.forecast.raw_pmf(),
                };
                let crps_v = crps(&pmf, case.obs);
                let logs_v = log_score(&floor_pmf(&pmf, t_days), case.obs)?;
                let pit_v = pit_value(&pmf, case.obs, &mut pit_rng);
                window_scores.push((d, crps_v, logs_v, pit_v));
            }
            collected.extend(window_scores);
            if config.save_models {
                last_model = model;
            }
            Ok(())
        })();
        if let Err(e) = result {
            out.failures.push(TaskFailure {
                station: station.clone(),
                lead_time: task.lead,
                method: method.clone(),
                window: Some(split_no),
                message: e.to_string(),
            });
        }
    }

    if collected.is_empty() {
        return Err(Error::EmptyTrainingSet("every window of the task failed"));
    }
    collected.sort_by_key(|&(d, ..)| d);
    let (mut ds, mut cs, mut ls, mut ps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (d, c, l, p) in collected {
        ds.push(d);
        cs.push(c);
        ls.push(l);
        ps.push(p);
    }
    for (kind, values) in [(ScoreKind::Crps, cs), (ScoreKind::LogS, ls)] {
        out.scores.push(ScoreSeries::new(
            SeriesKey {
                station: station.clone(),
                lead_time: task.lead,
                kind,
            },
            &method,
            ds.clone(),
            values,
        )?);
    }
    out.pit.push(PitSeries {
        station: station.clone(),
        lead_time: task.lead,
        method: method.clone(),
        values: ps,
    });
    if let Some(m) = last_model {
        out.models
            .push((format!("{station}_lead{}_{}", task.lead, method), m.to_record()));
    }
    Ok(())
}

/// Fits one window's model for a method task, recording tuning
/// provenance. RF parameters are tuned once on the first split and
/// reused; GBM re-tunes its depth on every split.
#[allow(clippy::too_many_arguments)]
fn fit_window_model(
    spec: MethodSpec,
    train_dates: &[NaiveDate],
    cases: &[Case<'_>],
    case_at: impl Fn(NaiveDate) -> usize,
    rf_params: &mut Option<RfParams>,
    n_splits: usize,
    split_no: usize,
    window_seed: &u64,
    rf_tune_seed: u64,
    out: &mut TaskOutput,
    ident: (&StationId, u8, &str),
) -> Result<Model> {
    let rows: Vec<Vec<f64>> = train_dates
        .iter()
        .map(|&d| cases[case_at(d)].row.clone())
        .collect();
    let labels: Vec<Okta> = train_dates
        .iter()
        .map(|&d| cases[case_at(d)].obs)
        .collect();
    let set = TrainSet::from_rows(spec.variant(), &rows, &labels)?;
    let (station, lead, method) = ident;

    match spec.family {
        Family::Mlr => Ok(Model::Mlr(mlr_fit(&set, &FitConfig::default())?)),
        Family::Polr => {
            let nonneg = BTreeSet::from([0usize, 1, 2]);
            Ok(Model::Polr(polr_fit(&set, &FitConfig::default(), &nonneg)?))
        }
        Family::Mlp => {
            let params = MlpParams {
                seed: *window_seed,
                ..MlpParams::default()
            };
            Ok(Model::Mlp(mlp_train(&set, &params)?.0))
        }
        Family::Rf => {
            if rf_params.is_none() {
                let window = WindowData::new(set.clone(), train_dates.to_vec())?;
                let tuned = tune_rf(&window, &RfGrid::default(), rf_tune_seed)?;
                out.provenance.push(ProvenanceRecord {
                    station: station.clone(),
                    lead_time: lead,
                    method: method.to_owned(),
                    detail: TuneDetail::RfReuse {
                        depth: tuned.depth,
                        mtry: tuned.mtry,
                        windows: n_splits,
                    },
                });
                *rf_params = Some(tuned);
            }
            let params = RfParams {
                seed: *window_seed,
                ..rf_params.clone().expect("tuned above")
            };
            Ok(Model::Rf(rf_fit(&set, &params)?))
        }
        Family::Gbm => {
            let window = WindowData::new(set, train_dates.to_vec())?;
            let base = GbmParams {
                max_rounds: GBM_MAX_ROUNDS,
                ..GbmParams::default()
            };
            let (model, choice) = tune_gbm(&window, &GbmGrid::default(), &base)?;
            out.provenance.push(ProvenanceRecord {
                station: station.clone(),
                lead_time: lead,
                method: method.to_owned(),
                detail: TuneDetail::GbmWindow {
                    window: split_no,
                    depth: choice.depth,
                    rounds: choice.rounds,
                },
            });
            Ok(Model::Gbm(model))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    fn tiny_synth(n_stations: usize, n_days: usize) -> StationDataset {
        synth_generate(&SynthConfig {
            n_stations,
            n_days,
            lead_times: vec![1],
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn tiny_config(methods: &[&str], window_years: usize) -> ExperimentConfig {
        ExperimentConfig {
            methods: methods.iter().map(|s| (*s).to_owned()).collect(),
            window_years,
            seed: 99,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip_and_bad_ones_fail() {
        for name in [
            "MLR", "MLRS", "POLR", "POLRS", "MLP", "MLPS", "RF", "RFS", "GBM", "GBMS", "MLP-P",
            "GBMS-P", "POLRS-P",
        ] {
            let spec = MethodSpec::parse(name).unwrap();
            assert_eq!(spec.id(), name);
        }
        assert_eq!(
            MethodSpec::parse("MLR").unwrap().variant(),
            FeatureVariant::Mlr6
        );
        assert_eq!(
            MethodSpec::parse("MLR-P").unwrap().variant(),
            FeatureVariant::Extended8
        );
        assert_eq!(
            MethodSpec::parse("GBMS").unwrap().variant(),
            FeatureVariant::Full7
        );
        for bad in ["RAW", "XGB", "MLRSS", "mlr", "", "S", "-P"] {
            assert!(MethodSpec::parse(bad).is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn config_validation_catches_mistakes() {
        let mut config = tiny_config(&["MLR", "MLR"], 5);
        assert!(config.validate().is_err());
        config.methods = vec!["MLR".to_owned()];
        config.reference = "POLR".to_owned();
        assert!(config.validate().is_err());
        config.reference = "MLR".to_owned();
        assert!(config.validate().is_ok());

        let parsed = ExperimentConfig::from_toml_str(
            "methods = [\"POLRS\"]\nreference = \"POLRS\"\nwindow_years = 3\n",
        )
        .unwrap();
        assert_eq!(parsed.methods, vec!["POLRS"]);
        assert_eq!(parsed.seed, ExperimentConfig::default().seed);
        assert!(ExperimentConfig::from_toml_str("method = [\"MLR\"]").is_err());
    }

    #[test]
    fn raw_only_run_matches_direct_scoring() {
        let dataset = tiny_synth(1, 1200);
        let config = tiny_config(&[], 2);
        let out = run_experiment(&dataset, &config).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.scores.len(), 2);
        assert_eq!(out.pit.len(), 1);

        let crps_series = &out.scores[0];
        assert_eq!(crps_series.method(), RAW_METHOD);
        assert_eq!(crps_series.key().kind, ScoreKind::Crps);

        // Recompute directly: test days are everything after the first
        // two calendar years.
        let series = &dataset.stations()[0];
        let mut expected = Vec::new();
        for r in series.records() {
            if r.date() >= NaiveDate::from_ymd_opt(2003, 1, 1).unwrap() {
                let f = r.forecast(0).unwrap();
                expected.push((r.date(), crps(&f.raw_pmf(), r.obs())));
            }
        }
        assert_eq!(crps_series.len(), expected.len());
        for ((d, v), (ed, ev)) in crps_series
            .dates()
            .iter()
            .zip(crps_series.values())
            .map(|(d, v)| (*d, *v))
            .zip(expected)
        {
            assert_eq!(d, ed);
            assert_eq!(v.to_bits(), ev.to_bits());
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let dataset = tiny_synth(2, 1150);
        let config = tiny_config(&["MLR", "MLP"], 2);
        let a = run_experiment(&dataset, &config).unwrap();
        let b = run_experiment(&dataset, &config).unwrap();
        assert_eq!(a.scores.len(), b.scores.len());
        for (sa, sb) in a.scores.iter().zip(&b.scores) {
            assert_eq!(sa.key(), sb.key());
            assert_eq!(sa.method(), sb.method());
            assert_eq!(sa.dates(), sb.dates());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(sa.values()), bits(sb.values()));
        }
        for (pa, pb) in a.pit.iter().zip(&b.pit) {
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn short_station_fails_without_aborting_the_run() {
        use crate::data::save_dataset;
        let good = tiny_synth(1, 1200);
        // Rebuild a two-station dataset: the good station plus a stub
        // with a single year of data.
        let mut bytes = Vec::new();
        save_dataset(&good, &mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let stub: Vec<String> = lines[1..366]
            .iter()
            .map(|l| l.replacen("st001", "st999", 1))
            .collect();
        lines.extend(stub.iter().map(|s| s.as_str()));
        let (dataset, report) = crate::data::load_dataset(lines.join("\n").as_bytes()).unwrap();
        assert!(report.rejected_rows.is_empty());
        assert_eq!(dataset.stations().len(), 2);

        let config = tiny_config(&["MLR"], 2);
        let out = run_experiment(&dataset, &config).unwrap();
        let failed: Vec<_> = out
            .failures
            .iter()
            .map(|f| (f.station.0.as_str(), f.method.as_str()))
            .collect();
        assert!(failed.contains(&("st999", "MLR")));
        assert!(failed.contains(&("st999", RAW_METHOD)));
        assert!(out
            .scores
            .iter()
            .all(|s| s.key().station.0 == "st001"));
        assert!(out
            .scores
            .iter()
            .any(|s| s.method() == "MLR"));
    }

    #[test]
    fn seasonal_and_plain_variants_score_the_same_dates() {
        let dataset = tiny_synth(1, 1500);
        let config = tiny_config(&["MLR", "MLRS"], 2);
        let out = run_experiment(&dataset, &config).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let dates_of = |m: &str| {
            out.scores
                .iter()
                .find(|s| s.method() == m && s.key().kind == ScoreKind::Crps)
                .unwrap()
                .dates()
                .to_vec()
        };
        assert_eq!(dates_of("MLR"), dates_of("MLRS"));
        assert_eq!(dates_of("MLR"), dates_of(RAW_METHOD));
    }

    #[test]
    fn tree_methods_record_their_tuning_provenance() {
        let dataset = tiny_synth(1, 1150);
        let config = tiny_config(&["RF", "GBM"], 2);
        let out = run_experiment(&dataset, &config).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);

        let rf: Vec<_> = out
            .provenance
            .iter()
            .filter(|p| p.method == "RF")
            .collect();
        assert_eq!(rf.len(), 1);
        match rf[0].detail {
            TuneDetail::RfReuse { windows, depth, mtry } => {
                assert_eq!(windows, 2);
                assert!((2..=4).contains(&depth));
                assert!((1..=3).contains(&mtry));
            }
            _ => panic!("wrong detail"),
        }

        let gbm: Vec<_> = out
            .provenance
            .iter()
            .filter(|p| p.method == "GBM")
            .collect();
        assert_eq!(gbm.len(), 2);
        for (i, p) in gbm.iter().enumerate() {
            match p.detail {
                TuneDetail::GbmWindow { window, depth, rounds } => {
                    assert_eq!(window, i);
                    assert!((1..=4).contains(&depth));
                    assert!(rounds >= 1);
                }
                _ => panic!("wrong detail"),
            }
        }
    }

    #[test]
    fn precip_methods_need_precip_data() {
        let dataset = synth_generate(&SynthConfig {
            n_stations: 1,
            n_days: 40,
            lead_times: vec![1],
            precip: false,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = tiny_config(&["POLR-P"], 2);
        assert!(matches!(
            run_experiment(&dataset, &config),
            Err(Error::MissingCovariate(_))
        ));
    }

    #[test]
    fn model_records_are_saved_on_request() {
        let dataset = tiny_synth(1, 1150);
        let mut config = tiny_config(&["MLR"], 2);
        config.save_models = true;
        let out = run_experiment(&dataset, &config).unwrap();
        assert_eq!(out.models.len(), 1);
        assert_eq!(out.models[0].0, "st001_lead1_MLR");
        let model = Model::from_record(&out.models[0].1).unwrap();
        assert_eq!(model.variant(), FeatureVariant::Mlr6);
    }
}
