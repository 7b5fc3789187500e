//! Fixed-point currency.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// A currency amount in integer cents. Sums are exact and order-independent.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn from_dollars(dollars: f64) -> Cents {
        Cents((dollars * 100.0).round() as i64)
    }

    pub fn from_whole_dollars(dollars: i64) -> Cents {
        Cents(dollars * 100)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Rounded to the nearest whole dollar, halves away from zero.
    pub fn whole_dollars(self) -> i64 {
        div_round(self.0 as i128, 100) as i64
    }

    pub fn max(self, other: Cents) -> Cents {
        Cents(self.0.max(other.0))
    }

    /// Arithmetic mean, rounded to the nearest cent. `None` for an empty slice.
    pub fn mean(values: &[Cents]) -> Option<Cents> {
        if values.is_empty() {
            return None;
        }
        let total: i128 = values.iter().map(|c| c.0 as i128).sum();
        Some(Cents(div_round(total, values.len() as i128) as i64))
    }

    /// Formats as a plain decimal with two places, e.g. `1234.50`.
    pub fn to_decimal_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }

    /// Parses a plain decimal amount (`1234`, `1234.5`, `-3.25`). A leading `$` is tolerated.
    pub fn parse(text: &str) -> Option<Cents> {
        let text = text.trim().trim_start_matches('$');
        let value: f64 = text.parse().ok()?;
        value.is_finite().then(|| Cents::from_dollars(value))
    }
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den {
        q + num.signum()
    } else {
        q
    }
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        iter.fold(Cents::ZERO, Add::add)
    }
}

/// Whole dollars with thousands separators, e.g. `$8,319,741`.
impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dollars = self.whole_dollars();
        let digits = dollars.unsigned_abs().to_string();
        let mut grouped = String::with_capacity(digits.len() + digits.len() / 3);
        for (i, ch) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i).is_multiple_of(3) {
                grouped.push(',');
            }
            grouped.push(ch);
        }
        let sign = if dollars < 0 { "-" } else { "" };
        write!(f, "{sign}${grouped}")
    }
}
