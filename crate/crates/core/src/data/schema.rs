//! Column names and domain-knowledge bounds. Bounds here are fixed metadata and are
//! never derived from data.

use crate::privacy::ClippingBounds;

pub const CSV_COLUMNS: [&str; 14] = [
    "member_id",
    "loan_amount",
    "total_funded_amount",
    "term_months",
    "interest_rate",
    "annual_income",
    "dti",
    "state",
    "zip_code",
    "home_ownership",
    "purpose",
    "loan_status",
    "total_recovered_principal",
    "recoveries",
];

pub const HOME_OWNERSHIP_LABELS: [&str; 4] = ["RENT", "OWN", "MORTGAGE", "OTHER"];

pub const PURPOSE_LABELS: [&str; 14] = [
    "debt_consolidation",
    "credit_card",
    "home_improvement",
    "major_purchase",
    "small_business",
    "car",
    "medical",
    "moving",
    "vacation",
    "house",
    "wedding",
    "renewable_energy",
    "educational",
    "other",
];

const fn bounds(lower: f64, upper: f64) -> ClippingBounds {
    // Constants below are all valid (lower < upper).
    match ClippingBounds::const_new(lower, upper) {
        Some(b) => b,
        None => panic!("invalid schema bounds"),
    }
}

pub const LOAN_AMOUNT_BOUNDS: ClippingBounds = bounds(0.0, 40_000.0);
pub const INCOME_BOUNDS: ClippingBounds = bounds(0.0, 500_000.0);
pub const TERM_BOUNDS: ClippingBounds = bounds(36.0, 60.0);
pub const RATE_BOUNDS: ClippingBounds = bounds(0.0, 35.0);
pub const DTI_BOUNDS: ClippingBounds = bounds(0.0, 100.0);
/// Per-record realized loss in dollars.
pub const LOSS_BOUNDS: ClippingBounds = bounds(0.0, 40_000.0);

/// Bounds for a raw numeric input column, if it is one.
pub fn bounds_for(column: &str) -> Option<ClippingBounds> {
    Some(match column {
        "loan_amount" | "total_funded_amount" => LOAN_AMOUNT_BOUNDS,
        "term_months" => TERM_BOUNDS,
        "interest_rate" => RATE_BOUNDS,
        "annual_income" => INCOME_BOUNDS,
        "dti" => DTI_BOUNDS,
        _ => return None,
    })
}
