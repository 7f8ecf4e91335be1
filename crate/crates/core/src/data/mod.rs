//! Dataset ingestion and generation.
//!
//! A [`StationDataset`] holds, per station, a date-ordered series of
//! records: one observed okta plus one ensemble forecast per configured
//! lead time (forecasts may be missing for individual leads). Datasets
//! round-trip through a delimited text format with the columns
//!
//! `station_id,date,lead_time,obs_okta,hres,ctrl,ens_01..ens_50,precip_mean`
//!
//! where `obs_okta` is the class index 0..8, `date` is ISO-8601, floats
//! are shortest-round-trip decimals, and `precip_mean` is empty when
//! unavailable. The synthetic generator lives in [`synth`].

pub mod synth;

pub use synth::{synth_generate, SynthConfig};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::Error;
use crate::forecast::{EnsembleForecast, StationId, N_EXCHANGEABLE};
use crate::okta::Okta;
use crate::Result;

/// One station-day: the observation and the per-lead forecasts.
#[derive(Debug, Clone)]
pub struct StationRecord {
    date: NaiveDate,
    obs: Okta,
    /// Parallel to the dataset's lead-time list.
    forecasts: Vec<Option<EnsembleForecast>>,
}

impl StationRecord {
    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn obs(&self) -> Okta {
        self.obs
    }

    /// Forecast at the dataset's `lead_idx`-th lead time, if present.
    pub fn forecast(&self, lead_idx: usize) -> Option<&EnsembleForecast> {
        self.forecasts.get(lead_idx).and_then(|f| f.as_ref())
    }
}

/// All records of one station, date-ascending.
#[derive(Debug, Clone)]
pub struct StationSeries {
    id: StationId,
    records: Vec<StationRecord>,
}

impl StationSeries {
    pub fn id(&self) -> &StationId {
        &self.id
    }

    pub fn records(&self) -> &[StationRecord] {
        &self.records
    }
}

/// A validated multi-station dataset.
#[derive(Debug, Clone)]
pub struct StationDataset {
    lead_times: Vec<u8>,
    has_precip: bool,
    stations: Vec<StationSeries>,
}

impl StationDataset {
    /// Assembles a dataset from per-key entries, establishing all
    /// invariants: unique (station, date), sorted stations and dates,
    /// forecast lead times drawn from `lead_times`.
    fn assemble(
        lead_times: Vec<u8>,
        entries: BTreeMap<(StationId, NaiveDate), (Okta, Vec<Option<EnsembleForecast>>)>,
    ) -> StationDataset {
        let mut stations: Vec<StationSeries> = Vec::new();
        let mut has_precip = true;
        let mut any_forecast = false;
        for ((station, date), (obs, forecasts)) in entries {
            for f in forecasts.iter().flatten() {
                any_forecast = true;
                has_precip &= f.precip_mean().is_some();
            }
            let record = StationRecord {
                date,
                obs,
                forecasts,
            };
            match stations.last_mut() {
                Some(series) if series.id == station => series.records.push(record),
                _ => stations.push(StationSeries {
                    id: station,
                    records: vec![record],
                }),
            }
        }
        StationDataset {
            lead_times,
            has_precip: has_precip && any_forecast,
            stations,
        }
    }

    pub fn lead_times(&self) -> &[u8] {
        &self.lead_times
    }

    /// Position of a lead time in the per-record forecast vectors.
    pub fn lead_index(&self, lead_time: u8) -> Option<usize> {
        self.lead_times.iter().position(|&l| l == lead_time)
    }

    /// True when every forecast in the dataset carries a precipitation
    /// covariate; the precipitation-extended feature set requires it.
    pub fn has_precip(&self) -> bool {
        self.has_precip
    }

    pub fn stations(&self) -> &[StationSeries] {
        &self.stations
    }

    pub fn station(&self, id: &StationId) -> Option<&StationSeries> {
        self.stations
            .binary_search_by(|s| s.id.cmp(id))
            .ok()
            .map(|i| &self.stations[i])
    }

    /// Earliest and latest record dates over all stations.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let mut range: Option<(NaiveDate, NaiveDate)> = None;
        for series in &self.stations {
            let (Some(first), Some(last)) = (series.records.first(), series.records.last())
            else {
                continue;
            };
            range = Some(match range {
                None => (first.date, last.date),
                Some((lo, hi)) => (lo.min(first.date), hi.max(last.date)),
            });
        }
        range
    }

    pub fn n_rows(&self) -> usize {
        self.stations
            .iter()
            .flat_map(|s| &s.records)
            .map(|r| r.forecasts.iter().flatten().count())
            .sum()
    }
}

/// Row-level problems found while loading; the offending rows are
/// skipped, everything else loads.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    /// (1-based line number, what was wrong).
    pub rejected_rows: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

const N_COLUMNS: usize = 6 + N_EXCHANGEABLE + 1;

fn header() -> String {
    let mut h = String::from("station_id,date,lead_time,obs_okta,hres,ctrl");
    for i in 1..=N_EXCHANGEABLE {
        let _ = write!(h, ",ens_{i:02}");
    }
    h.push_str(",precip_mean");
    h
}

/// Writes the dataset in the documented delimited format, rows ordered by
/// (station, date, lead time). Output is byte-deterministic.
pub fn save_dataset<W: Write>(dataset: &StationDataset, out: &mut W) -> Result<()> {
    let mut text = header();
    text.push('\n');
    for series in &dataset.stations {
        if series.id.0.contains([',', '\n']) {
            return Err(Error::config(format!(
                "station id {:?} contains the delimiter",
                series.id.0
            )));
        }
        for record in &series.records {
            for (lead_idx, forecast) in record.forecasts.iter().enumerate() {
                let Some(f) = forecast else { continue };
                let _ = write!(
                    text,
                    "{},{},{},{}",
                    series.id, record.date, dataset.lead_times[lead_idx], record.obs.index()
                );
                let _ = write!(text, ",{},{}", f.hres(), f.ctrl());
                for m in f.members() {
                    let _ = write!(text, ",{m}");
                }
                match f.precip_mean() {
                    Some(p) => {
                        let _ = write!(text, ",{p}");
                    }
                    None => text.push(','),
                }
                text.push('\n');
            }
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn save_dataset_to_path(dataset: &StationDataset, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    save_dataset(dataset, &mut file)
}

/// Loads a dataset. Structural problems (bad header, duplicate keys,
/// conflicting observations) fail the load; malformed rows are skipped
/// and reported with their line numbers.
pub fn load_dataset<R: Read>(input: R) -> Result<(StationDataset, LoadReport)> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let mut report = LoadReport::default();

    let header_line = match lines.next() {
        None => {
            report.warnings.push("empty file, empty dataset".to_owned());
            return Ok((StationDataset::assemble(Vec::new(), BTreeMap::new()), report));
        }
        Some((_, line)) => line?,
    };
    if header_line.trim() != header() {
        return Err(Error::parse(1, "header does not match the dataset schema"));
    }

    // (station, date) -> (obs, lead -> forecast); lead set collected on
    // the fly and compacted afterwards.
    let mut entries: BTreeMap<(StationId, NaiveDate), (Okta, BTreeMap<u8, EnsembleForecast>)> =
        BTreeMap::new();
    let mut leads: Vec<u8> = Vec::new();
    let mut any_row = false;

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        any_row = true;
        match parse_row(&line) {
            Err(e) => report.rejected_rows.push((line_no, e.to_string())),
            Ok(row) => {
                if !leads.contains(&row.lead_time) {
                    leads.push(row.lead_time);
                }
                let key = (row.station, row.date);
                let entry = entries
                    .entry(key)
                    .or_insert_with(|| (row.obs, BTreeMap::new()));
                if entry.0 != row.obs {
                    return Err(Error::parse(
                        line_no,
                        "conflicting observations for one station-date",
                    ));
                }
                if entry.1.insert(row.lead_time, row.forecast).is_some() {
                    return Err(Error::parse(
                        line_no,
                        "duplicate (station, date, lead_time) row",
                    ));
                }
            }
        }
    }
    if !any_row {
        report.warnings.push("no data rows, empty dataset".to_owned());
    }

    leads.sort_unstable();
    let compacted = entries
        .into_iter()
        .map(|(key, (obs, by_lead))| {
            let forecasts = leads
                .iter()
                .map(|lead| by_lead.get(lead).cloned())
                .collect();
            (key, (obs, forecasts))
        })
        .collect();
    Ok((StationDataset::assemble(leads, compacted), report))
}

pub fn load_dataset_from_path(path: &Path) -> Result<(StationDataset, LoadReport)> {
    load_dataset(std::fs::File::open(path)?)
}

struct Row {
    station: StationId,
    date: NaiveDate,
    lead_time: u8,
    obs: Okta,
    forecast: EnsembleForecast,
}

fn parse_row(line: &str) -> Result<Row> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != N_COLUMNS {
        return Err(Error::config(format!(
            "expected {N_COLUMNS} columns, found {}",
            fields.len()
        )));
    }
    let station = StationId::from(fields[0]);
    if station.0.is_empty() {
        return Err(Error::config("empty station id"));
    }
    let date: NaiveDate = fields[1]
        .parse()
        .map_err(|_| Error::config(format!("bad date {:?}", fields[1])))?;
    let lead_time: u8 = fields[2]
        .parse()
        .map_err(|_| Error::config(format!("bad lead time {:?}", fields[2])))?;
    let obs_idx: usize = fields[3]
        .parse()
        .map_err(|_| Error::config(format!("bad observation {:?}", fields[3])))?;
    let obs = Okta::new(obs_idx)?;
    let float = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::config(format!("bad {what} {s:?}")))
    };
    let hres = float(fields[4], "hres")?;
    let ctrl = float(fields[5], "ctrl")?;
    let mut members = [0.0; N_EXCHANGEABLE];
    for (m, field) in members.iter_mut().zip(&fields[6..6 + N_EXCHANGEABLE]) {
        *m = float(field, "member")?;
    }
    let precip = fields[N_COLUMNS - 1];
    let precip_mean = if precip.is_empty() {
        None
    } else {
        Some(float(precip, "precip_mean")?)
    };
    let forecast = EnsembleForecast::new(station.clone(), date, lead_time, members, ctrl, hres, precip_mean)?;
    Ok(Row {
        station,
        date,
        lead_time,
        obs,
        forecast,
    })
}

/// Builder used by the generator and tests to produce valid datasets.
pub(crate) struct DatasetBuilder {
    lead_times: Vec<u8>,
    entries: BTreeMap<(StationId, NaiveDate), (Okta, Vec<Option<EnsembleForecast>>)>,
}

impl DatasetBuilder {
    pub(crate) fn new(lead_times: Vec<u8>) -> DatasetBuilder {
        DatasetBuilder {
            lead_times,
            entries: BTreeMap::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        station: &StationId,
        date: NaiveDate,
        obs: Okta,
        forecasts: Vec<Option<EnsembleForecast>>,
    ) {
        debug_assert_eq!(forecasts.len(), self.lead_times.len());
        self.entries
            .insert((station.clone(), date), (obs, forecasts));
    }

    pub(crate) fn finish(self) -> StationDataset {
        StationDataset::assemble(self.lead_times, self.entries)
    }
}
