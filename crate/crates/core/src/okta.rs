//! The nine-value okta scale for total cloud cover.
//!
//! Observations and ensemble members are cloud fractions in [0, 1]. The
//! reporting scale is discrete: nine classes whose representative fractions
//! are 0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9 and 1. Values 0 and 1 are
//! deliberately special: "sky fully clear" and "sky fully covered" are
//! distinct meteorological events with their own point masses, which is why
//! the outermost quantization cells are narrow ([0, 0.01) and [0.99, 1]).

use crate::error::Error;
use crate::Result;

/// Representative cloud fraction of each okta class, indexed 0..=8.
pub const OKTA_FRACTIONS: [f64; 9] = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0];

/// Number of okta classes.
pub const N_CLASSES: usize = 9;

/// Upper cell bounds between consecutive classes. Cell `k` is
/// `[BOUNDS[k-1], BOUNDS[k])` (with `BOUNDS[-1]` read as 0), except the last
/// cell `[0.99, 1]` which is closed. A fraction equal to a bound belongs to
/// the cell above it.
pub const QUANTIZATION_BOUNDS: [f64; 8] = [
    0.01, 0.1875, 0.3125, 0.4375, 0.5625, 0.6875, 0.8125, 0.99,
];

/// One okta class, stored as its index 0..=8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Okta(u8);

impl Okta {
    /// All nine classes in ascending order.
    pub const ALL: [Okta; 9] = [
        Okta(0),
        Okta(1),
        Okta(2),
        Okta(3),
        Okta(4),
        Okta(5),
        Okta(6),
        Okta(7),
        Okta(8),
    ];

    /// Builds a class from its index; fails outside 0..=8.
    pub fn new(index: usize) -> Result<Okta> {
        if index < N_CLASSES {
            Ok(Okta(index as u8))
        } else {
            Err(Error::OutOfRange {
                what: "okta index",
                value: index as f64,
            })
        }
    }

    /// Class index in 0..=8.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Representative cloud fraction of this class.
    pub fn fraction(self) -> f64 {
        OKTA_FRACTIONS[self.index()]
    }
}

impl std::fmt::Display for Okta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Quantizes a cloud fraction in [0, 1] to its okta class.
///
/// The class index equals the number of quantization bounds less than or
/// equal to the value, so a value sitting exactly on a bound falls in the
/// cell above it. Non-finite values and values outside [0, 1] are rejected.
pub fn quantize(fraction: f64) -> Result<Okta> {
    if !fraction.is_finite() {
        return Err(Error::NonFinite("cloud fraction"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::OutOfRange {
            what: "cloud fraction",
            value: fraction,
        });
    }
    let index = QUANTIZATION_BOUNDS.iter().filter(|&&b| b <= fraction).count();
    Ok(Okta(index as u8))
}
