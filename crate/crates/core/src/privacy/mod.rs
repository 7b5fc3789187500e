//! Differential privacy mechanisms and budget accounting.
//!
//! Mechanisms are pure functions of their inputs and an explicit random stream; they
//! never touch an accountant. Callers debit a [`PrivacyAccountant`] before releasing
//! a noisy answer.

mod accountant;
mod mechanisms;

pub use accountant::{BudgetReport, LedgerEntry, PrivacyAccountant, PrivacySpend};
pub use mechanisms::{dp_count, dp_median, dp_sum, gaussian, gaussian_sigma, laplace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a computation sees exact data statistics or only DP releases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Exact,
    Private,
}

/// An (ε, δ) pair. ε > 0, δ ∈ [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    epsilon: f64,
    #[serde(default)]
    delta: f64,
}

impl TryFrom<RawParams> for PrivacyParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        PrivacyParams::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::params(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::params(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    /// Pure ε-DP.
    pub fn pure(epsilon: f64) -> Result<Self> {
        PrivacyParams::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Scales both coordinates by `fraction` ∈ (0, 1].
    pub fn fraction(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::params(format!("budget fraction must lie in (0, 1], got {fraction}")));
        }
        PrivacyParams::new(self.epsilon * fraction, self.delta * fraction)
    }

    /// Splits evenly into `parts` pieces under basic composition.
    pub fn split(&self, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::params("cannot split a budget into zero parts"));
        }
        PrivacyParams::new(self.epsilon / parts as f64, self.delta / parts as f64)
    }
}

/// Domain-knowledge bounds used to clip record contributions. `lower < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct ClippingBounds {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawBounds> for ClippingBounds {
    type Error = Error;
    fn try_from(raw: RawBounds) -> Result<Self> {
        ClippingBounds::new(raw.lower, raw.upper)
    }
}

impl ClippingBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::params(format!("invalid clipping bounds [{lower}, {upper}]")));
        }
        Ok(ClippingBounds { lower, upper })
    }

    pub const fn const_new(lower: f64, upper: f64) -> Option<Self> {
        if lower.is_finite() && upper.is_finite() && lower < upper {
            Some(ClippingBounds { lower, upper })
        } else {
            None
        }
    }

    pub const fn unit() -> Self {
        ClippingBounds { lower: 0.0, upper: 1.0 }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// Sensitivity of a clipped sum under adding or removing one record.
    pub fn sum_sensitivity(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }

    /// Maps a clipped value onto [0, 1].
    pub fn normalize(&self, x: f64) -> f64 {
        (self.clip(x) - self.lower) / self.width()
    }

    /// Spacing of the candidate grid used by the private median: the largest power of
    /// ten not exceeding 10⁻⁵ of the width.
    pub fn granule(&self) -> f64 {
        10f64.powi(self.granule_exponent())
    }

    fn granule_exponent(&self) -> i32 {
        (self.width() / 100_000.0).log10().floor() as i32
    }

    /// Grid of candidate outputs `lower, lower + g, …, upper`, computed without
    /// accumulated rounding (each point is `lower + j·g` with `g` a power of ten).
    pub fn grid(&self) -> Vec<f64> {
        let k = self.granule_exponent();
        let steps = (self.width() / self.granule()).floor() as u64;
        let point = |j: u64| {
            if k < 0 {
                self.lower + j as f64 / 10f64.powi(-k)
            } else {
                self.lower + j as f64 * 10f64.powi(k)
            }
        };
        let mut grid: Vec<f64> = (0..=steps).map(point).collect();
        if grid.last().is_some_and(|&last| last < self.upper) {
            grid.push(self.upper);
        }
        grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(1.0, 0.0).is_ok());
        assert!(PrivacyParams::new(0.0, 0.0).is_err());
        assert!(PrivacyParams::new(-1.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(f64::NAN, 0.0).is_err());
        let p = PrivacyParams::new(8.0, 1e-5).unwrap().fraction(0.25).unwrap();
        assert_eq!(p.epsilon(), 2.0);
    }

    #[test]
    fn params_deserialize_validates() {
        assert!(serde_json::from_str::<PrivacyParams>(r#"{"epsilon": -1}"#).is_err());
        let p: PrivacyParams = serde_json::from_str(r#"{"epsilon": 2}"#).unwrap();
        assert_eq!(p.delta(), 0.0);
    }

    #[test]
    fn bounds_validation_and_sensitivity() {
        assert!(ClippingBounds::new(1.0, 1.0).is_err());
        assert!(ClippingBounds::new(2.0, 1.0).is_err());
        let b = ClippingBounds::new(-3.0, 2.0).unwrap();
        assert_eq!(b.sum_sensitivity(), 3.0);
        assert_eq!(b.width(), 5.0);
        assert_eq!(b.clip(10.0), 2.0);
    }

    #[test]
    fn grid_hits_integers_and_decimals() {
        let grid = ClippingBounds::new(0.0, 1002.0).unwrap().grid();
        assert_eq!(grid.len(), 100_201);
        assert_eq!(grid[50_100], 501.0);
        let grid = ClippingBounds::new(0.0, 10.0).unwrap().grid();
        assert_eq!(grid[50_000], 5.0);
        assert_eq!(grid[1_234], 0.1234);
        assert_eq!(*grid.last().unwrap(), 10.0);
        let grid = ClippingBounds::new(0.0, 500_000.0).unwrap().grid();
        assert_eq!(grid.len(), 500_001);
    }
}
