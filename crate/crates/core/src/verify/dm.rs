//! Diebold-Mariano test for equal predictive accuracy.
//!
//! Given two comparable score series, the test statistic is the mean score
//! difference studentized by a HAC variance estimate. Daily forecast
//! errors at lead `h` overlap for `h - 1` days, so the variance uses a
//! rectangular kernel truncated at lag `h - 1`:
//!
//! `s2 = g_0 + 2 * sum_{k=1..h-1} g_k`,
//!
//! with `g_k` the lag-`k` empirical autocovariance of the differences. The
//! rectangular sum can go negative in small samples; the standard fallback
//! to the lag-0 variance is applied then. Two-sided p-values come from the
//! standard normal limit, which is meaningful for series of a month or
//! longer; callers comparing shorter series get exact arithmetic but a
//! crude approximation.

use statrs::distribution::{ContinuousCDF, Normal};

use super::ScoreSeries;
use crate::error::Error;
use crate::Result;

/// Result of one Diebold-Mariano comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// Mean score difference `a - b`; negative favors `a`.
    pub mean_diff: f64,
    /// Studentized statistic.
    pub statistic: f64,
    /// Two-sided p-value under the normal limit.
    pub p_value: f64,
}

impl TestResult {
    /// Sign of the mean score difference.
    pub fn direction(&self) -> i8 {
        if self.mean_diff > 0.0 {
            1
        } else if self.mean_diff < 0.0 {
            -1
        } else {
            0
        }
    }
}

/// Tests the score series `a` against `b`; the autocovariance truncation
/// lag comes from the series' lead time.
///
/// The series must be comparable (same station, lead time, score kind and
/// dates). Two bitwise-identical series are reported as a clean tie
/// (statistic 0, p-value 1). A nonzero mean difference with exactly zero
/// variance cannot be studentized and is an error.
pub fn dm_test(a: &ScoreSeries, b: &ScoreSeries) -> Result<TestResult> {
    a.check_comparable(b)?;
    let n = a.len();
    let d: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;

    let autocov = |k: usize| -> f64 {
        let mut acc = 0.0;
        for t in 0..n - k {
            acc += (d[t] - mean) * (d[t + k] - mean);
        }
        acc / n as f64
    };

    let g0 = autocov(0);
    if g0 == 0.0 {
        if mean == 0.0 {
            return Ok(TestResult {
                mean_diff: 0.0,
                statistic: 0.0,
                p_value: 1.0,
            });
        }
        return Err(Error::DegenerateSeries(
            "constant nonzero score difference",
        ));
    }

    let max_lag = (a.key().lead_time as usize).saturating_sub(1).min(n - 1);
    let mut s2 = g0;
    for k in 1..=max_lag {
        s2 += 2.0 * autocov(k);
    }
    if s2 <= 0.0 {
        s2 = g0;
    }

    let statistic = mean / (s2 / n as f64).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = 2.0 * normal.cdf(-statistic.abs());
    Ok(TestResult {
        mean_diff: mean,
        statistic,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::StationId;
    use crate::verify::{ScoreKind, SeriesKey};
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn series_at(values: Vec<f64>, lead: u8) -> ScoreSeries {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let dates = (0..values.len() as i64)
            .map(|i| start + chrono::Duration::days(i))
            .collect();
        let key = SeriesKey {
            station: StationId::from("s1"),
            lead_time: lead,
            kind: ScoreKind::Crps,
        };
        ScoreSeries::new(key, "m", dates, values).unwrap()
    }

    fn series(values: Vec<f64>) -> ScoreSeries {
        series_at(values, 1)
    }

    #[test]
    fn hand_computed_lag_zero_case() {
        // d = [1, 2, 3]: mean 2, g0 = 2/3, statistic = 2 / sqrt(2/9) = 3 sqrt 2.
        let a = series(vec![2.0, 4.0, 6.0]);
        let b = series(vec![1.0, 2.0, 3.0]);
        let out = dm_test(&a, &b).unwrap();
        assert_abs_diff_eq!(out.mean_diff, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.statistic, 3.0 * 2.0f64.sqrt(), epsilon = 1e-12);
        assert_eq!(out.direction(), 1);
        // Tail mass of |N(0,1)| beyond 4.2426...
        assert!(out.p_value > 2.1e-5 && out.p_value < 2.3e-5, "p {}", out.p_value);
    }

    #[test]
    fn swapping_the_series_flips_the_sign() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() * 1.1).collect();
        let ab = dm_test(&series_at(x.clone(), 5), &series_at(y.clone(), 5)).unwrap();
        let ba = dm_test(&series_at(y, 5), &series_at(x, 5)).unwrap();
        assert_abs_diff_eq!(ab.statistic, -ba.statistic, epsilon = 1e-12);
        assert_abs_diff_eq!(ab.p_value, ba.p_value, epsilon = 1e-12);
        assert_abs_diff_eq!(ab.mean_diff, -ba.mean_diff, epsilon = 1e-12);
        assert_eq!(ab.direction(), -ba.direction());
    }

    #[test]
    fn identical_series_tie_cleanly() {
        let x = series(vec![0.4, 0.6, 0.5, 0.7]);
        let out = dm_test(&x, &x.clone()).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
        assert_eq!(out.direction(), 0);
    }

    #[test]
    fn constant_nonzero_difference_is_degenerate() {
        let a = series(vec![1.0, 1.0, 1.0, 1.0]);
        let b = series(vec![0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(dm_test(&a, &b), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn incomparable_series_are_rejected() {
        let a = series(vec![1.0, 2.0, 3.0]);
        let b = series(vec![1.0, 2.0]);
        assert!(matches!(
            dm_test(&a, &b),
            Err(Error::IncomparableSeries(_))
        ));
        let c = series_at(vec![1.0, 2.0, 3.0], 4);
        assert!(matches!(
            dm_test(&a, &c),
            Err(Error::IncomparableSeries(_))
        ));
    }

    #[test]
    fn positive_autocorrelation_widens_the_variance() {
        // AR(1) differences with strong positive correlation: the HAC
        // statistic at lead 7 must shrink relative to the lag-0 one.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 400;
        let mut d = vec![0.0; n];
        for t in 1..n {
            d[t] = 0.8 * d[t - 1] + rng.gen::<f64>() - 0.5;
        }
        let shift: Vec<f64> = d.iter().map(|v| v + 0.2).collect();
        let zero = vec![0.0; n];
        let lag0 = dm_test(&series(shift.clone()), &series(zero.clone())).unwrap();
        let hac = dm_test(&series_at(shift, 7), &series_at(zero, 7)).unwrap();
        assert!(
            hac.statistic.abs() < lag0.statistic.abs(),
            "hac {} vs lag0 {}",
            hac.statistic,
            lag0.statistic
        );
    }

    #[test]
    fn null_p_values_are_roughly_uniform() {
        // Independent scores on both sides: the p-value should be
        // uniform. Kolmogorov-Smirnov distance over 300 replicates at a
        // generous threshold keeps this stable across seeds.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut pvals: Vec<f64> = (0..300)
            .map(|_| {
                let a: Vec<f64> = (0..120)
                    .map(|_| rng.gen::<f64>() + rng.gen::<f64>())
                    .collect();
                let b: Vec<f64> = (0..120)
                    .map(|_| rng.gen::<f64>() + rng.gen::<f64>())
                    .collect();
                dm_test(&series(a), &series(b)).unwrap().p_value
            })
            .collect();
        pvals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = pvals.len() as f64;
        let ks = pvals
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let hi = (i + 1) as f64 / n - p;
                let lo = p - i as f64 / n;
                hi.max(lo)
            })
            .fold(0.0f64, f64::max);
        // 1% KS critical value for n = 300 is about 0.094.
        assert!(ks < 0.094, "KS distance {ks}");
    }
}
