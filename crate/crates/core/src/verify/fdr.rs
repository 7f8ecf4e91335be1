//! Benjamini-Hochberg false-discovery-rate control.

use crate::error::Error;
use crate::Result;

/// Step-up Benjamini-Hochberg procedure at FDR level `alpha`.
///
/// Returns one flag per input p-value, `true` meaning rejected. With the
/// p-values sorted ascending as `p_(1) <= ... <= p_(n)`, the largest rank
/// `r` with `p_(r) <= r * alpha / n` is found and every hypothesis with a
/// p-value at most `p_(r)` is rejected; if no rank qualifies nothing is.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "FDR level",
            value: alpha,
        });
    }
    for &p in p_values {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange {
                what: "p-value",
                value: p,
            });
        }
    }
    let n = p_values.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());

    let mut threshold = None;
    for (rank0, &idx) in order.iter().enumerate() {
        let rank = (rank0 + 1) as f64;
        if p_values[idx] <= rank * alpha / n as f64 {
            threshold = Some(p_values[idx]);
        }
    }

    let mut rejected = vec![false; n];
    if let Some(t) = threshold {
        for (flag, &p) in rejected.iter_mut().zip(p_values) {
            *flag = p <= t;
        }
    }
    Ok(rejected)
}
