//! Delimited text tables for run outputs and derived comparisons.
//!
//! A run's primary artifact is the case table: one row per scored
//! forecast case carrying CRPS, log score and PIT value. It is exactly
//! reloadable, so every aggregate (summaries, skill scores, test
//! matrices, PIT histograms) can be recomputed later without rerunning
//! the experiment. Aggregate tables share a single seven-column header;
//! counts and test fractions are encoded in the metric column. Floats
//! are written in shortest round-trip form, which keeps rerendered
//! tables byte-identical.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::Error;
use crate::forecast::StationId;
use crate::pipeline::{PitSeries, ProvenanceRecord, TaskFailure, TuneDetail};
use crate::report::{DmCell, PitRow, SkillRow};
use crate::verify::{ScoreKind, ScoreSeries, SeriesKey};
use crate::Result;

/// Header of the per-case score table.
pub const CASE_HEADER: &str = "station,lead_time,method,date,crps,logs,pit";

/// Shared header of all aggregate tables.
pub const AGGREGATE_HEADER: &str = "station,lead_time,method,metric,value,ci_lo,ci_hi";

/// Station label used by tables pooled over all stations.
pub const POOLED: &str = "ALL";

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn check_field(what: &str, value: &str) -> Result<()> {
    if value.contains(',') || value.contains('\n') {
        return Err(Error::config(format!(
            "{what} {value:?} cannot be written to a delimited table"
        )));
    }
    Ok(())
}

/// Renders the per-case table from a run's score and PIT series.
///
/// Each (station, lead time, method) must contribute exactly one CRPS
/// series, one log-score series and one PIT series, all on the same
/// dates; rows are emitted in (station, lead time, method, date) order
/// regardless of input order.
pub fn case_table(scores: &[ScoreSeries], pit: &[PitSeries]) -> Result<String> {
    type GroupKey<'a> = (&'a StationId, u8, &'a str);
    let mut groups: BTreeMap<GroupKey, [Option<&ScoreSeries>; 2]> = BTreeMap::new();
    for s in scores {
        let key = (&s.key().station, s.key().lead_time, s.method());
        let slot = &mut groups.entry(key).or_default()[s.key().kind as usize];
        if slot.is_some() {
            return Err(Error::IncomparableSeries(format!(
                "duplicate {} series for {}/{}/{}",
                s.key().kind,
                key.0,
                key.1,
                key.2
            )));
        }
        *slot = Some(s);
    }
    let mut pit_of: BTreeMap<GroupKey, &PitSeries> = BTreeMap::new();
    for p in pit {
        if pit_of
            .insert((&p.station, p.lead_time, &p.method), p)
            .is_some()
        {
            return Err(Error::IncomparableSeries(format!(
                "duplicate PIT series for {}/{}/{}",
                p.station, p.lead_time, p.method
            )));
        }
    }

    let mut out = String::from(CASE_HEADER);
    out.push('\n');
    for ((station, lead, method), slots) in &groups {
        check_field("station id", &station.0)?;
        check_field("method id", method)?;
        let describe = || format!("{station}/{lead}/{method}");
        let [crps, logs] = slots;
        let (crps, logs) = match (crps, logs) {
            (Some(c), Some(l)) => (c, l),
            _ => {
                return Err(Error::IncomparableSeries(format!(
                    "missing score series for {}",
                    describe()
                )))
            }
        };
        let pit = pit_of.get(&(*station, *lead, *method)).ok_or_else(|| {
            Error::IncomparableSeries(format!("missing PIT series for {}", describe()))
        })?;
        if crps.dates() != logs.dates() || pit.values.len() != crps.len() {
            return Err(Error::IncomparableSeries(format!(
                "misaligned series for {}",
                describe()
            )));
        }
        for (i, &date) in crps.dates().iter().enumerate() {
            out.push_str(&format!(
                "{station},{lead},{method},{date},{},{},{}\n",
                fmt(crps.values()[i]),
                fmt(logs.values()[i]),
                fmt(pit.values[i]),
            ));
        }
    }
    Ok(out)
}

/// Parses a case table back into score and PIT series.
pub fn parse_case_table(text: &str) -> Result<(Vec<ScoreSeries>, Vec<PitSeries>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CASE_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(
                1,
                format!("expected header {CASE_HEADER:?}, found {h:?}"),
            ))
        }
        None => return Err(Error::parse(0, "empty case table")),
    }

    type Rows = Vec<(NaiveDate, f64, f64, f64)>;
    let mut groups: BTreeMap<(StationId, u8, String), Rows> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let lead: u8 = fields[1]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad lead time {:?}", fields[1])))?;
        let date: NaiveDate = fields[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad date {:?}", fields[3])))?;
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad number {:?}", fields[i])))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value {v}")));
            }
            Ok(v)
        };
        let (crps, logs, pit) = (num(4)?, num(5)?, num(6)?);
        if !(0.0..=1.0).contains(&pit) {
            return Err(Error::parse(line_no, format!("PIT value {pit} out of [0,1]")));
        }
        groups
            .entry((StationId::from(fields[0]), lead, fields[2].to_owned()))
            .or_default()
            .push((date, crps, logs, pit));
    }

    let mut scores = Vec::new();
    let mut pit_series = Vec::new();
    for ((station, lead, method), rows) in groups {
        let dates: Vec<NaiveDate> = rows.iter().map(|&(d, ..)| d).collect();
        for (kind, pick) in [
            (ScoreKind::Crps, 1usize),
            (ScoreKind::LogS, 2usize),
        ] {
            let values = rows
                .iter()
                .map(|&(_, c, l, _)| if pick == 1 { c } else { l })
                .collect();
            scores.push(ScoreSeries::new(
                SeriesKey {
                    station: station.clone(),
                    lead_time: lead,
                    kind,
                },
                &method,
                dates.clone(),
                values,
            )?);
        }
        pit_series.push(PitSeries {
            station,
            lead_time: lead,
            method,
            values: rows.iter().map(|&(.., p)| p).collect(),
        });
    }
    Ok((scores, pit_series))
}

/// Per-series mean scores, one row per (station, lead time, method,
/// metric); the interval columns stay empty.
pub fn summary_table(scores: &[ScoreSeries]) -> String {
    let mut rows: Vec<String> = scores
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{}_mean,{},,",
                s.key().station,
                s.key().lead_time,
                s.method(),
                s.key().kind.id(),
                fmt(s.mean()),
            )
        })
        .collect();
    rows.sort();
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Skill scores with confidence intervals, pooled over stations.
pub fn skill_csv(rows: &[SkillRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{POOLED},{},{},{}s,{},{},{}\n",
            r.lead_time,
            r.method,
            r.kind.id(),
            fmt(r.skill),
            fmt(r.ci_lo),
            fmt(r.ci_hi),
        ));
    }
    out
}

/// Pairwise test matrix; each cell yields a significant-fraction row
/// and a tested-station-count row.
pub fn dm_csv(cells: &[DmCell]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for c in cells {
        let pair = format!("{}~{}", c.method_a, c.method_b);
        out.push_str(&format!(
            "{POOLED},{},{pair},dm_frac_significant_{},{},,\n",
            c.lead_time,
            c.kind.id(),
            fmt(c.frac_significant),
        ));
        out.push_str(&format!(
            "{POOLED},{},{pair},dm_n_stations_{},{},,\n",
            c.lead_time,
            c.kind.id(),
            c.n_stations,
        ));
    }
    out
}

/// Pooled PIT bin counts, one row per bin.
pub fn pit_csv(rows: &[PitRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        for (i, &count) in r.counts.iter().enumerate() {
            out.push_str(&format!(
                "{POOLED},{},{},pit_bin_{:02}_of_{},{count},,\n",
                r.lead_time,
                r.method,
                i + 1,
                r.counts.len(),
            ));
        }
    }
    out
}

/// Failure report; commas and newlines in messages are flattened so the
/// table stays one row per failure.
pub fn failures_table(failures: &[TaskFailure]) -> String {
    let mut out = String::from("station,lead_time,method,window,message\n");
    for f in failures {
        let window = f.window.map_or(String::new(), |w| w.to_string());
        let message: String = f
            .message
            .replace(',', ";")
            .replace('\n', " ");
        out.push_str(&format!(
            "{},{},{},{window},{message}\n",
            f.station, f.lead_time, f.method,
        ));
    }
    out
}

/// Tuning provenance report.
pub fn provenance_table(provenance: &[ProvenanceRecord]) -> String {
    let mut out = String::from("station,lead_time,method,detail\n");
    for p in provenance {
        let detail = match p.detail {
            TuneDetail::RfReuse {
                depth,
                mtry,
                windows,
            } => format!("rf_reuse depth={depth} mtry={mtry} windows={windows}"),
            TuneDetail::GbmWindow {
                window,
                depth,
                rounds,
            } => format!("gbm_window window={window} depth={depth} rounds={rounds}"),
        };
        out.push_str(&format!(
            "{},{},{},{detail}\n",
            p.station, p.lead_time, p.method,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(
        station: &str,
        lead: u8,
        kind: ScoreKind,
        method: &str,
        values: Vec<f64>,
    ) -> ScoreSeries {
        let d0 = NaiveDate::from_ymd_opt(2007, 6, 1).unwrap();
        let dates = (0..values.len() as i64)
            .map(|i| d0 + chrono::Duration::days(i))
            .collect();
        ScoreSeries::new(
            SeriesKey {
                station: StationId::from(station),
                lead_time: lead,
                kind,
            },
            method,
            dates,
            values,
        )
        .unwrap()
    }

    fn pit(station: &str, lead: u8, method: &str, values: Vec<f64>) -> PitSeries {
        PitSeries {
            station: StationId::from(station),
            lead_time: lead,
            method: method.to_owned(),
            values,
        }
    }

    #[test]
    fn case_table_round_trips_bitwise() {
        let scores = vec![
            series("s2", 1, ScoreKind::Crps, "MLR", vec![0.125, 0.3, 1.0 / 3.0]),
            series("s2", 1, ScoreKind::LogS, "MLR", vec![1.5, 2.25, 0.7]),
            series("s1", 4, ScoreKind::Crps, "RAW", vec![0.5, 0.0625]),
            series("s1", 4, ScoreKind::LogS, "RAW", vec![2.0, 3.5]),
        ];
        let pits = vec![
            pit("s2", 1, "MLR", vec![0.1, 0.9, 0.55]),
            pit("s1", 4, "RAW", vec![0.25, 1.0]),
        ];
        let text = case_table(&scores, &pits).unwrap();
        assert!(text.starts_with(CASE_HEADER));
        let (scores2, pits2) = parse_case_table(&text).unwrap();
        assert_eq!(scores2.len(), 4);
        assert_eq!(pits2.len(), 2);
        // Canonical order puts station s1 first regardless of input order.
        assert_eq!(scores2[0].key().station.0, "s1");
        let text2 = case_table(&scores2, &pits2).unwrap();
        assert_eq!(text, text2);
        for s in &scores {
            let back = scores2
                .iter()
                .find(|t| t.key() == s.key() && t.method() == s.method())
                .unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(back.values()), bits(s.values()));
        }
    }

    #[test]
    fn case_table_rejects_incomplete_groups() {
        let scores = vec![series("s1", 1, ScoreKind::Crps, "MLR", vec![0.5])];
        let pits = vec![pit("s1", 1, "MLR", vec![0.5])];
        assert!(matches!(
            case_table(&scores, &pits),
            Err(Error::IncomparableSeries(_))
        ));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let bad_header = "station,lead\nx";
        assert!(matches!(
            parse_case_table(bad_header),
            Err(Error::Parse { line: 1, .. })
        ));
        let base = format!("{CASE_HEADER}\ns1,1,MLR,2007-06-01,0.5,1.5,0.5\n");
        assert!(parse_case_table(&base).is_ok());
        let short = format!("{CASE_HEADER}\ns1,1,MLR,2007-06-01,0.5,1.5\n");
        assert!(matches!(
            parse_case_table(&short),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_pit = format!("{CASE_HEADER}\ns1,1,MLR,2007-06-01,0.5,1.5,1.5\n");
        assert!(matches!(
            parse_case_table(&bad_pit),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_float = format!("{CASE_HEADER}\ns1,1,MLR,2007-06-01,inf,1.5,0.5\n");
        assert!(matches!(
            parse_case_table(&bad_float),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn summary_orders_rows_and_takes_means() {
        let scores = vec![
            series("b", 1, ScoreKind::Crps, "RAW", vec![0.5, 1.5]),
            series("a", 1, ScoreKind::LogS, "RAW", vec![2.0, 4.0]),
        ];
        let text = summary_table(&scores);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AGGREGATE_HEADER);
        assert_eq!(lines[1], "a,1,RAW,logs_mean,3,,");
        assert_eq!(lines[2], "b,1,RAW,crps_mean,1,,");
    }

    #[test]
    fn aggregate_renderers_emit_documented_shapes() {
        let skill = skill_csv(&[SkillRow {
            lead_time: 4,
            kind: ScoreKind::Crps,
            method: "MLP".to_owned(),
            skill: 0.25,
            ci_lo: 0.2,
            ci_hi: 0.3,
        }]);
        assert!(skill.contains("ALL,4,MLP,crpss,0.25,0.2,0.3"));

        let dm = dm_csv(&[DmCell {
            lead_time: 1,
            kind: ScoreKind::LogS,
            method_a: "MLR".to_owned(),
            method_b: "RAW".to_owned(),
            n_stations: 20,
            frac_significant: 0.85,
        }]);
        assert!(dm.contains("ALL,1,MLR~RAW,dm_frac_significant_logs,0.85,,"));
        assert!(dm.contains("ALL,1,MLR~RAW,dm_n_stations_logs,20,,"));

        let pit_text = pit_csv(&[PitRow {
            lead_time: 7,
            method: "RAW".to_owned(),
            counts: vec![3, 0, 5],
        }]);
        assert!(pit_text.contains("ALL,7,RAW,pit_bin_01_of_3,3,,"));
        assert!(pit_text.contains("ALL,7,RAW,pit_bin_03_of_3,5,,"));
    }

    #[test]
    fn failure_messages_stay_single_row() {
        let text = failures_table(&[TaskFailure {
            station: StationId::from("s1"),
            lead_time: 1,
            method: "GBM".to_owned(),
            window: Some(2),
            message: "bad, very\nbad".to_owned(),
        }]);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "s1,1,GBM,2,bad; very bad"
        );
    }
}
