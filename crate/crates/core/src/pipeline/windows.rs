//! Rolling training windows and the two-season calendar.
//!
//! A scheme turns the available dates of one station into fit tasks: each
//! window trains on `window_years` consecutive calendar years and tests on
//! the entire following calendar year, then rolls forward by one year.
//! The seasonal scheme emits two splits per window, one per half-year
//! season, each training only on same-season days; the union of their
//! test dates equals the non-seasonal test set.

use chrono::{Datelike, NaiveDate};

use crate::error::Error;
use crate::Result;

/// The two training seasons, by month: April through September versus
/// October through March.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Season {
    AprSep,
    OctMar,
}

impl Season {
    pub const ALL: [Season; 2] = [Season::AprSep, Season::OctMar];

    pub fn of(date: NaiveDate) -> Season {
        if (4..=9).contains(&date.month()) {
            Season::AprSep
        } else {
            Season::OctMar
        }
    }

    pub fn contains(self, date: NaiveDate) -> bool {
        Season::of(date) == self
    }

    pub fn id(self) -> &'static str {
        match self {
            Season::AprSep => "apr-sep",
            Season::OctMar => "oct-mar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    NonSeasonal,
    Seasonal,
}

/// How training windows are carved out of the available history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingScheme {
    pub kind: SchemeKind,
    pub window_years: usize,
}

impl Default for TrainingScheme {
    fn default() -> Self {
        TrainingScheme {
            kind: SchemeKind::NonSeasonal,
            window_years: 5,
        }
    }
}

impl TrainingScheme {
    pub fn non_seasonal(window_years: usize) -> TrainingScheme {
        TrainingScheme {
            kind: SchemeKind::NonSeasonal,
            window_years,
        }
    }

    pub fn seasonal(window_years: usize) -> TrainingScheme {
        TrainingScheme {
            kind: SchemeKind::Seasonal,
            window_years,
        }
    }
}

/// One fit task: train dates, test dates, and where it sits in the roll.
#[derive(Debug, Clone)]
pub struct WindowSplit {
    /// 0-based window number; seasonal schemes emit two splits per window.
    pub window_index: usize,
    /// `None` for the non-seasonal scheme.
    pub season: Option<Season>,
    pub first_train_year: i32,
    pub test_year: i32,
    pub train_dates: Vec<NaiveDate>,
    pub test_dates: Vec<NaiveDate>,
}

/// Enumerates rolling splits over the available dates.
///
/// Calendar years are taken from the span of the dates: the first
/// training window starts at the earliest year. Fewer than `window_years`
/// calendar years is an error; exactly `window_years` yields zero splits
/// (a window exists but there is nothing left to test). Splits whose
/// train or test side would be empty (gap years) are dropped.
pub fn rolling_windows(
    available: &[NaiveDate],
    scheme: &TrainingScheme,
) -> Result<Vec<WindowSplit>> {
    if scheme.window_years == 0 {
        return Err(Error::config("window_years must be at least 1"));
    }
    if available.is_empty() {
        return Err(Error::InsufficientHistory("no dates available".to_owned()));
    }
    if available.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "available dates must be strictly increasing",
        ));
    }

    let wy = scheme.window_years as i32;
    let first_year = available[0].year();
    let last_year = available[available.len() - 1].year();
    let n_years = (last_year - first_year + 1) as usize;
    if n_years < scheme.window_years {
        return Err(Error::InsufficientHistory(format!(
            "{n_years} calendar years available, {} needed for one window",
            scheme.window_years
        )));
    }

    let in_years = |date: NaiveDate, from: i32, to: i32| {
        let y = date.year();
        from <= y && y <= to
    };
    let mut splits = Vec::new();
    for start in first_year..=last_year - wy {
        let test_year = start + wy;
        let window_index = (start - first_year) as usize;
        let seasons: &[Option<Season>] = match scheme.kind {
            SchemeKind::NonSeasonal => &[None],
            SchemeKind::Seasonal => &[Some(Season::AprSep), Some(Season::OctMar)],
        };
        for &season in seasons {
            let keep = |d: &&NaiveDate| season.map_or(true, |s| s.contains(**d));
            let train_dates: Vec<NaiveDate> = available
                .iter()
                .filter(|d| in_years(**d, start, test_year - 1))
                .filter(keep)
                .copied()
                .collect();
            let test_dates: Vec<NaiveDate> = available
                .iter()
                .filter(|d| d.year() == test_year)
                .filter(keep)
                .copied()
                .collect();
            if train_dates.is_empty() || test_dates.is_empty() {
                continue;
            }
            // Leakage audit: training may never touch the test year.
            assert!(
                train_dates.iter().all(|d| d.year() < test_year),
                "training window leaked into test year {test_year}"
            );
            splits.push(WindowSplit {
                window_index,
                season,
                first_train_year: start,
                test_year,
                train_dates,
                test_dates,
            });
        }
    }
    Ok(splits)
}
