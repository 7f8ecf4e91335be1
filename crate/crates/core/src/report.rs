//! Aggregated comparisons across an experiment's score series.
//!
//! Three summaries condense the per-case output: skill scores against a
//! reference method with stationary-bootstrap confidence intervals,
//! a pairwise Diebold-Mariano matrix with per-station tests pooled by a
//! Benjamini-Hochberg adjustment, and pooled PIT histograms. All three
//! tolerate partially failed runs by aligning series on common dates and
//! skipping stations with too little overlap.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::forecast::StationId;
use crate::pipeline::{stable_seed, PitSeries};
use crate::verify::{benjamini_hochberg, dm_test, resample_indices, ScoreKind, ScoreSeries};
use crate::Result;

/// Minimum aligned days for a per-station Diebold-Mariano test; the
/// normal limit is meaningless below a month of data.
pub const MIN_DM_DAYS: usize = 30;

/// One skill-score entry: a method against the reference, pooled over
/// stations, at one lead time and score kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillRow {
    pub lead_time: u8,
    pub kind: ScoreKind,
    pub method: String,
    pub skill: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// One cell of the pairwise test matrix at one lead time and score kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DmCell {
    pub lead_time: u8,
    pub kind: ScoreKind,
    pub method_a: String,
    pub method_b: String,
    /// Stations with enough aligned data to be tested.
    pub n_stations: usize,
    /// Fraction of tested stations rejected by the adjusted procedure.
    pub frac_significant: f64,
}

/// Pooled PIT bin counts for one method at one lead time.
#[derive(Debug, Clone, PartialEq)]
pub struct PitRow {
    pub lead_time: u8,
    pub method: String,
    pub counts: Vec<u64>,
}

/// Skill of every method against `reference`, per lead time and score
/// kind, pooled across stations date by date.
///
/// For each date the scores of all covering stations are averaged; the
/// skill is `1 - sum(method) / sum(reference)` over those pooled values.
/// Confidence intervals come from recomputing that ratio on stationary
/// bootstrap resamples of the dates, which preserves the serial
/// dependence of daily scores. The reference's own row is exactly zero
/// with a zero-width interval.
pub fn skill_table(
    scores: &[ScoreSeries],
    reference: &str,
    n_boot: usize,
    mean_block_len: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<SkillRow>> {
    if n_boot < 2 {
        return Err(Error::config("need at least two bootstrap replicates"));
    }
    if mean_block_len < 1 {
        return Err(Error::config("mean block length must be at least 1"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::OutOfRange {
            what: "confidence level",
            value: level,
        });
    }
    let mut by_cell: BTreeMap<(u8, ScoreKind, &str), Vec<&ScoreSeries>> = BTreeMap::new();
    for s in scores {
        by_cell
            .entry((s.key().lead_time, s.key().kind, s.method()))
            .or_default()
            .push(s);
    }
    let cells: BTreeSet<(u8, ScoreKind)> = by_cell.keys().map(|&(l, k, _)| (l, k)).collect();
    let methods: BTreeSet<&str> = by_cell.keys().map(|&(.., m)| m).collect();
    if !methods.contains(reference) {
        return Err(Error::IncomparableSeries(format!(
            "reference {reference:?} has no score series"
        )));
    }

    let mut rows = Vec::new();
    for &(lead, kind) in &cells {
        let refs = match by_cell.get(&(lead, kind, reference)) {
            Some(r) => r,
            None => {
                return Err(Error::IncomparableSeries(format!(
                    "reference {reference:?} has no {kind} scores at lead {lead}"
                )))
            }
        };
        let ref_by_station: BTreeMap<&StationId, &ScoreSeries> =
            refs.iter().map(|s| (&s.key().station, *s)).collect();
        for &method in &methods {
            let series = match by_cell.get(&(lead, kind, method)) {
                Some(s) => s,
                None => continue,
            };
            // Pool per date: mean over stations covering that date.
            let mut pooled: BTreeMap<NaiveDate, (f64, f64, usize)> = BTreeMap::new();
            for s in series {
                let Some(r) = ref_by_station.get(&s.key().station) else {
                    continue;
                };
                for (d, mv, rv) in intersect_dates(s, r) {
                    let e = pooled.entry(d).or_insert((0.0, 0.0, 0));
                    e.0 += mv;
                    e.1 += rv;
                    e.2 += 1;
                }
            }
            if pooled.is_empty() {
                return Err(Error::IncomparableSeries(format!(
                    "method {method:?} shares no dates with the reference at lead {lead}"
                )));
            }
            let m_daily: Vec<f64> = pooled.values().map(|&(m, _, c)| m / c as f64).collect();
            let r_daily: Vec<f64> = pooled.values().map(|&(_, r, c)| r / c as f64).collect();
            let ratio = |idx: &[usize]| -> Result<f64> {
                let ms: f64 = idx.iter().map(|&i| m_daily[i]).sum();
                let rs: f64 = idx.iter().map(|&i| r_daily[i]).sum();
                if rs <= 0.0 {
                    return Err(Error::DegenerateSeries(
                        "reference mean score must be positive",
                    ));
                }
                Ok(1.0 - ms / rs)
            };
            let all: Vec<usize> = (0..m_daily.len()).collect();
            let skill = ratio(&all)?;
            let mut rng = ChaCha12Rng::seed_from_u64(stable_seed(
                seed,
                &["skill", &lead.to_string(), kind.id(), method],
            ));
            let mut reps = Vec::with_capacity(n_boot);
            for _ in 0..n_boot {
                let idx = resample_indices(m_daily.len(), mean_block_len, &mut rng);
                reps.push(ratio(&idx)?);
            }
            let (ci_lo, ci_hi) = percentile_interval(&mut reps, level);
            rows.push(SkillRow {
                lead_time: lead,
                kind,
                method: method.to_owned(),
                skill,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(rows)
}

/// Pairwise Diebold-Mariano comparison of every method pair.
///
/// Per (lead time, score kind, pair): each station's two series are
/// aligned on their common dates, stations with fewer than
/// [`MIN_DM_DAYS`] are skipped, and the remaining per-station p-values
/// are adjusted together; the cell reports the rejected fraction.
/// Cells with no testable station are omitted.
pub fn dm_matrix(scores: &[ScoreSeries], alpha: f64) -> Result<Vec<DmCell>> {
    let mut by_cell: BTreeMap<(u8, ScoreKind, &str), BTreeMap<&StationId, &ScoreSeries>> =
        BTreeMap::new();
    for s in scores {
        by_cell
            .entry((s.key().lead_time, s.key().kind, s.method()))
            .or_default()
            .insert(&s.key().station, s);
    }
    let cells: BTreeSet<(u8, ScoreKind)> = by_cell.keys().map(|&(l, k, _)| (l, k)).collect();
    let methods: BTreeSet<&str> = by_cell.keys().map(|&(.., m)| m).collect();

    let mut out = Vec::new();
    for &(lead, kind) in &cells {
        let methods_here: Vec<&str> = methods
            .iter()
            .copied()
            .filter(|m| by_cell.contains_key(&(lead, kind, m)))
            .collect();
        for (i, &a) in methods_here.iter().enumerate() {
            for &b in &methods_here[i + 1..] {
                let sa = &by_cell[&(lead, kind, a)];
                let sb = &by_cell[&(lead, kind, b)];
                let mut p_values = Vec::new();
                for (station, s) in sa {
                    let Some(t) = sb.get(station) else { continue };
                    let Some((al, bl)) = align_pair(s, t)? else {
                        continue;
                    };
                    p_values.push(dm_test(&al, &bl)?.p_value);
                }
                if p_values.is_empty() {
                    continue;
                }
                let rejected = benjamini_hochberg(&p_values, alpha)?;
                let n_sig = rejected.iter().filter(|&&r| r).count();
                out.push(DmCell {
                    lead_time: lead,
                    kind,
                    method_a: a.to_owned(),
                    method_b: b.to_owned(),
                    n_stations: p_values.len(),
                    frac_significant: n_sig as f64 / p_values.len() as f64,
                });
            }
        }
    }
    Ok(out)
}

/// Pools PIT values across stations per (lead time, method) and bins
/// them into `n_bins` equal-width bins.
pub fn pit_bins(pit: &[PitSeries], n_bins: usize) -> Result<Vec<PitRow>> {
    let mut pooled: BTreeMap<(u8, &str), Vec<f64>> = BTreeMap::new();
    for p in pit {
        pooled
            .entry((p.lead_time, &p.method))
            .or_default()
            .extend_from_slice(&p.values);
    }
    let mut rows = Vec::new();
    for ((lead, method), values) in pooled {
        rows.push(PitRow {
            lead_time: lead,
            method: method.to_owned(),
            counts: crate::verify::pit_histogram(&values, n_bins)?,
        });
    }
    Ok(rows)
}

/// Walks two date-sorted series and yields (date, value_a, value_b) on
/// their common dates.
fn intersect_dates<'a>(
    a: &'a ScoreSeries,
    b: &'a ScoreSeries,
) -> impl Iterator<Item = (NaiveDate, f64, f64)> + 'a {
    let (mut i, mut j) = (0usize, 0usize);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            let (da, db) = (a.dates()[i], b.dates()[j]);
            match da.cmp(&db) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let item = (da, a.values()[i], b.values()[j]);
                    i += 1;
                    j += 1;
                    return Some(item);
                }
            }
        }
        None
    })
}

/// Restricts both series to their common dates; `None` when fewer than
/// [`MIN_DM_DAYS`] remain.
fn align_pair(a: &ScoreSeries, b: &ScoreSeries) -> Result<Option<(ScoreSeries, ScoreSeries)>> {
    if a.dates() == b.dates() {
        if a.len() < MIN_DM_DAYS {
            return Ok(None);
        }
        return Ok(Some((a.clone(), b.clone())));
    }
    let common: Vec<(NaiveDate, f64, f64)> = intersect_dates(a, b).collect();
    if common.len() < MIN_DM_DAYS {
        return Ok(None);
    }
    let dates: Vec<NaiveDate> = common.iter().map(|&(d, ..)| d).collect();
    let va: Vec<f64> = common.iter().map(|&(_, x, _)| x).collect();
    let vb: Vec<f64> = common.iter().map(|&(.., y)| y).collect();
    Ok(Some((
        ScoreSeries::new(a.key().clone(), a.method(), dates.clone(), va)?,
        ScoreSeries::new(b.key().clone(), b.method(), dates, vb)?,
    )))
}

/// Central `level`-mass percentile interval, linear-interpolation
/// quantiles; sorts `reps` in place.
fn percentile_interval(reps: &mut [f64], level: f64) -> (f64, f64) {
    reps.sort_by(|a, b| a.partial_cmp(b).expect("finite replicates"));
    let quantile = |q: f64| -> f64 {
        let pos = q * (reps.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        reps[lo] + (pos - lo as f64) * (reps[hi] - reps[lo])
    };
    let tail = (1.0 - level) / 2.0;
    (quantile(tail), quantile(1.0 - tail))
}
