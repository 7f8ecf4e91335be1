//! Experiment orchestration: rolling windows, tuning, and scoring.
//!
//! [`windows`] carves station histories into rolling train/test splits,
//! [`tuning`] implements the per-window selection protocols for the tree
//! ensembles, and [`experiment`] drives the full (station, lead time,
//! method, window) grid, collecting score series, PIT values, tuning
//! provenance and per-task failures.

pub mod experiment;
pub mod tuning;
pub mod windows;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentOutput, Family, MethodSpec, PitSeries,
    ProvenanceRecord, TaskFailure, TuneDetail, RAW_METHOD,
};
pub use tuning::{tune_gbm, tune_rf, GbmChoice, GbmGrid, RfGrid, WindowData};
pub use windows::{rolling_windows, SchemeKind, Season, TrainingScheme, WindowSplit};

/// Deterministic sub-seed derivation (FNV-1a over the base seed and a
/// list of label strings). Stable across platforms and releases, unlike
/// the standard library hasher.
pub(crate) fn stable_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&base.to_le_bytes());
    for p in parts {
        eat(p.as_bytes());
        eat(&[0xff]);
    }
    h
}
