use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::frame::{Column, ColumnData, Frame};
use crate::error::{Error, Result};
use crate::privacy::{dp_count, dp_median, dp_sum, ClippingBounds, PrivacyAccountant, PrivacyParams};
use crate::rng::DpRng;

/// How a fit step obtains data statistics.
pub enum FitMode<'a> {
    Exact,
    /// Every statistic is a DP release debited to `accountant` under `query_id`.
    Private {
        accountant: &'a PrivacyAccountant,
        epsilon: f64,
        rng: &'a mut DpRng,
        query_id: String,
    },
}

/// One fitted preprocessing transform. Applying a fitted step is deterministic and
/// never looks at data statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum TransformStep {
    BinCategorical {
        column: String,
        /// Lower-cased raw label → bin.
        table: BTreeMap<String, String>,
        fallback: String,
        vocabulary: Vec<String>,
    },
    DropColumns {
        columns: Vec<String>,
    },
    CorrelationFilter {
        threshold: f64,
        columns_considered: Vec<String>,
        dropped: Vec<String>,
    },
    MedianImpute {
        values: BTreeMap<String, f64>,
    },
    OneHot {
        columns: Vec<OneHotColumn>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneHotColumn {
    pub column: String,
    pub vocabulary: Vec<String>,
}

pub const STATE_REGIONS: [&str; 5] = ["Northeast", "Midwest", "South", "West", "OTHER"];
pub const HOME_OWNERSHIP_BINS: [&str; 4] = ["RENT", "OWN", "MORTGAGE", "OTHER"];
pub const PURPOSE_BINS: [&str; 5] = ["debt", "credit_card", "home", "major_purchase", "other"];

// US Census Bureau regions; DC belongs to the South.
const NORTHEAST: [&str; 9] = ["CT", "ME", "MA", "NH", "RI", "VT", "NJ", "NY", "PA"];
const MIDWEST: [&str; 12] = [
    "IL", "IN", "MI", "OH", "WI", "IA", "KS", "MN", "MO", "NE", "ND", "SD",
];
const SOUTH: [&str; 17] = [
    "DE", "DC", "FL", "GA", "MD", "NC", "SC", "VA", "WV", "AL", "KY", "MS", "TN", "AR", "LA",
    "OK", "TX",
];
const WEST: [&str; 13] = [
    "AZ", "CO", "ID", "MT", "NV", "NM", "UT", "WY", "AK", "CA", "HI", "OR", "WA",
];

/// Fixed, data-independent binning table for `state`, `home_ownership` or `purpose`.
pub fn fit_binning(column: &str) -> Result<TransformStep> {
    let mut table = BTreeMap::new();
    let (fallback, vocabulary): (&str, &[&str]) = match column {
        "state" => {
            for (region, states) in [
                ("Northeast", &NORTHEAST[..]),
                ("Midwest", &MIDWEST[..]),
                ("South", &SOUTH[..]),
                ("West", &WEST[..]),
            ] {
                for s in states {
                    table.insert(s.to_ascii_lowercase(), region.to_string());
                }
            }
            ("OTHER", &STATE_REGIONS)
        }
        "home_ownership" => {
            for label in ["RENT", "OWN", "MORTGAGE"] {
                table.insert(label.to_ascii_lowercase(), label.to_string());
            }
            ("OTHER", &HOME_OWNERSHIP_BINS)
        }
        "purpose" => {
            for (raw, bin) in [
                ("debt_consolidation", "debt"),
                ("credit_card", "credit_card"),
                ("home_improvement", "home"),
                ("house", "home"),
                ("major_purchase", "major_purchase"),
                ("car", "major_purchase"),
            ] {
                table.insert(raw.to_string(), bin.to_string());
            }
            ("other", &PURPOSE_BINS)
        }
        other => return Err(Error::UnknownColumn(other.to_string())),
    };
    Ok(TransformStep::BinCategorical {
        column: column.to_string(),
        table,
        fallback: fallback.to_string(),
        vocabulary: vocabulary.iter().map(|s| s.to_string()).collect(),
    })
}

pub fn fit_drop_columns<S: AsRef<str>>(names: &[S]) -> TransformStep {
    TransformStep::DropColumns {
        columns: names.iter().map(|s| s.as_ref().to_string()).collect(),
    }
}

pub const DEFAULT_DROP_COLUMNS: [&str; 3] = ["loan_amount", "zip_code", "member_id"];

fn complete_numeric<'a>(frame: &'a Frame, name: &str) -> Result<&'a [Option<f64>]> {
    let column = frame
        .column(name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
    match &column.data {
        ColumnData::Numeric(values) => Ok(values),
        ColumnData::Categorical(_) => Err(Error::params(format!("column `{name}` is not numeric"))),
    }
}

fn exact_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-column imputation values: the exact median of present values, or a DP median
/// (ε split evenly across columns) over each column's schema bounds.
pub fn fit_median_impute(frame: &Frame, columns: &[String], mode: FitMode<'_>) -> Result<TransformStep> {
    let mut values = BTreeMap::new();
    match mode {
        FitMode::Exact => {
            for name in columns {
                let mut present: Vec<f64> =
                    complete_numeric(frame, name)?.iter().flatten().copied().collect();
                if present.is_empty() {
                    return Err(Error::EmptyInput(format!("column `{name}` has no values")));
                }
                values.insert(name.clone(), exact_median(&mut present));
            }
        }
        FitMode::Private {
            accountant,
            epsilon,
            rng,
            query_id,
        } => {
            if columns.is_empty() {
                return Ok(TransformStep::MedianImpute { values });
            }
            let per_column = epsilon / columns.len() as f64;
            for name in columns {
                let bounds = frame
                    .column(name)
                    .and_then(|c| c.bounds)
                    .ok_or_else(|| Error::params(format!("private imputation of `{name}` needs bounds")))?;
                let present: Vec<f64> = complete_numeric(frame, name)?.iter().flatten().copied().collect();
                if present.is_empty() {
                    return Err(Error::EmptyInput(format!("column `{name}` has no values")));
                }
                accountant.consume(format!("{query_id}/{name}"), PrivacyParams::pure(per_column)?)?;
                values.insert(name.clone(), dp_median(&present, bounds, per_column, rng)?);
            }
        }
    }
    Ok(TransformStep::MedianImpute { values })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Correlation from noisy first and second moments of values normalized to [0, 1].
fn correlation_from_moments(n: f64, su: f64, sv: f64, suu: f64, svv: f64, suv: f64) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let cov = suv / n - (su / n) * (sv / n);
    let var_u = suu / n - (su / n).powi(2);
    let var_v = svv / n - (sv / n).powi(2);
    if var_u <= 0.0 || var_v <= 0.0 {
        0.0
    } else {
        (cov / (var_u * var_v).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Drops the later column (in frame order) of every numeric pair whose |r| exceeds
/// `threshold`. Pairs involving an already-dropped column are skipped.
///
/// In private mode each column is clipped to its schema bounds and scaled to [0, 1];
/// the correlation is assembled from five DP sums per pair (Σu, Σv, Σu², Σv², Σuv)
/// plus one shared DP count, with ε split evenly across all of those releases.
pub fn fit_correlation_filter(frame: &Frame, threshold: f64, mode: FitMode<'_>) -> Result<TransformStep> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::params(format!("correlation threshold must lie in (0, 1), got {threshold}")));
    }
    let numeric: Vec<&Column> = frame.numeric_columns().collect();
    if numeric.len() < 2 {
        return Err(Error::params("correlation filtering needs at least two numeric columns"));
    }
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(numeric.len());
    for column in &numeric {
        let ColumnData::Numeric(values) = &column.data else { unreachable!() };
        let complete: Option<Vec<f64>> = values.iter().copied().collect();
        data.push(complete.ok_or_else(|| Error::MissingValues(column.name.clone()))?);
    }
    let k = numeric.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();

    let correlations: Vec<f64> = match mode {
        FitMode::Exact => pairs.iter().map(|&(i, j)| pearson(&data[i], &data[j])).collect(),
        FitMode::Private {
            accountant,
            epsilon,
            rng,
            query_id,
        } => {
            let bounds: Vec<ClippingBounds> = numeric
                .iter()
                .map(|c| {
                    c.bounds
                        .ok_or_else(|| Error::params(format!("private correlation of `{}` needs bounds", c.name)))
                })
                .collect::<Result<_>>()?;
            let releases = 5 * pairs.len() + 1;
            let per_release = epsilon / releases as f64;
            accountant.consume(query_id, PrivacyParams::pure(epsilon)?)?;
            let normalized: Vec<Vec<f64>> = data
                .iter()
                .zip(&bounds)
                .map(|(col, b)| col.iter().map(|&x| b.normalize(x)).collect())
                .collect();
            let unit = ClippingBounds::unit();
            let n = dp_count(frame.n_rows(), per_release, rng)?.max(1.0);
            let mut out = Vec::with_capacity(pairs.len());
            for &(i, j) in &pairs {
                let (u, v) = (&normalized[i], &normalized[j]);
                let squares = |w: &[f64]| w.iter().map(|x| x * x).collect::<Vec<_>>();
                let products: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
                let su = dp_sum(u, unit, per_release, rng)?;
                let sv = dp_sum(v, unit, per_release, rng)?;
                let suu = dp_sum(&squares(u), unit, per_release, rng)?;
                let svv = dp_sum(&squares(v), unit, per_release, rng)?;
                let suv = dp_sum(&products, unit, per_release, rng)?;
                out.push(correlation_from_moments(n, su, sv, suu, svv, suv));
            }
            out
        }
    };

    let mut dropped = vec![false; k];
    for (&(i, j), r) in pairs.iter().zip(&correlations) {
        if !dropped[i] && !dropped[j] && r.abs() > threshold {
            dropped[j] = true;
        }
    }
    Ok(TransformStep::CorrelationFilter {
        threshold,
        columns_considered: numeric.iter().map(|c| c.name.clone()).collect(),
        dropped: numeric
            .iter()
            .zip(&dropped)
            .filter(|(_, &d)| d)
            .map(|(c, _)| c.name.clone())
            .collect(),
    })
}

/// One-hot encoding over fixed vocabularies. Unseen categories encode as all zeros.
pub fn fit_one_hot(columns: Vec<(String, Vec<String>)>) -> TransformStep {
    TransformStep::OneHot {
        columns: columns
            .into_iter()
            .map(|(column, vocabulary)| OneHotColumn { column, vocabulary })
            .collect(),
    }
}

impl TransformStep {
    /// Input columns this step removes from the frame.
    pub fn removed_columns(&self) -> Vec<&str> {
        match self {
            TransformStep::DropColumns { columns } => columns.iter().map(String::as_str).collect(),
            TransformStep::CorrelationFilter { dropped, .. } => dropped.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    pub fn apply(&self, frame: &mut Frame) -> Result<()> {
        match self {
            TransformStep::BinCategorical {
                column,
                table,
                fallback,
                ..
            } => {
                let col = frame
                    .column_mut(column)
                    .ok_or_else(|| Error::SchemaMismatch { column: column.clone() })?;
                let ColumnData::Categorical(values) = &mut col.data else {
                    return Err(Error::params(format!("cannot bin numeric column `{column}`")));
                };
                for v in values.iter_mut() {
                    let key = v.trim().to_ascii_lowercase();
                    *v = table.get(&key).unwrap_or(fallback).clone();
                }
            }
            TransformStep::DropColumns { columns } | TransformStep::CorrelationFilter { dropped: columns, .. } => {
                for name in columns {
                    frame.remove(name);
                }
            }
            TransformStep::MedianImpute { values } => {
                for (name, &fill) in values {
                    let col = frame
                        .column_mut(name)
                        .ok_or_else(|| Error::SchemaMismatch { column: name.clone() })?;
                    let ColumnData::Numeric(cells) = &mut col.data else {
                        return Err(Error::params(format!("cannot impute categorical column `{name}`")));
                    };
                    for cell in cells.iter_mut().filter(|c| c.is_none()) {
                        *cell = Some(fill);
                    }
                }
            }
            TransformStep::OneHot { columns } => {
                for OneHotColumn { column, vocabulary } in columns {
                    let col = frame
                        .column(column)
                        .ok_or_else(|| Error::SchemaMismatch { column: column.clone() })?;
                    let ColumnData::Categorical(values) = &col.data else {
                        return Err(Error::params(format!("cannot one-hot numeric column `{column}`")));
                    };
                    let indicators: Vec<Column> = vocabulary
                        .iter()
                        .map(|label| {
                            Column::numeric(
                                &format!("{column}={label}"),
                                values.iter().map(|v| Some(f64::from(u8::from(v == label)))).collect(),
                                Some(ClippingBounds::unit()),
                            )
                        })
                        .collect();
                    frame.replace_with(column, indicators)?;
                }
            }
        }
        Ok(())
    }
}
