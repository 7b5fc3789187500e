use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{bounds_for, Dataset, LoanRecord};
use crate::error::{Error, Result};
use crate::privacy::ClippingBounds;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    /// Schema bounds of a numeric column.
    pub bounds: Option<ClippingBounds>,
}

impl Column {
    pub fn numeric(name: &str, values: Vec<Option<f64>>, bounds: Option<ClippingBounds>) -> Self {
        Column {
            name: name.to_string(),
            data: ColumnData::Numeric(values),
            bounds,
        }
    }

    pub fn categorical(name: &str, values: Vec<String>) -> Self {
        Column {
            name: name.to_string(),
            data: ColumnData::Categorical(values),
            bounds: None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.data, ColumnData::Numeric(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// A raw input column a pipeline was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputColumn {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ClippingBounds>,
}

/// Named, typed columns of equal length: the intermediate form between raw records
/// and a [`FeatureMatrix`](super::FeatureMatrix).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    n_rows: usize,
    columns: Vec<Column>,
}

/// Record fields that enter the frame. Outcome fields (status, recovered principal,
/// recoveries) only feed targets and never become features.
const FRAME_COLUMNS: [(&str, ColumnKind); 11] = [
    ("member_id", ColumnKind::Categorical),
    ("loan_amount", ColumnKind::Numeric),
    ("total_funded_amount", ColumnKind::Numeric),
    ("term_months", ColumnKind::Numeric),
    ("interest_rate", ColumnKind::Numeric),
    ("annual_income", ColumnKind::Numeric),
    ("dti", ColumnKind::Numeric),
    ("state", ColumnKind::Categorical),
    ("zip_code", ColumnKind::Categorical),
    ("home_ownership", ColumnKind::Categorical),
    ("purpose", ColumnKind::Categorical),
];

fn numeric_field(r: &LoanRecord, name: &str) -> Option<f64> {
    match name {
        "loan_amount" => Some(r.loan_amount.dollars()),
        "total_funded_amount" => Some(r.total_funded_amount.dollars()),
        "term_months" => Some(f64::from(r.term_months)),
        "interest_rate" => Some(r.interest_rate),
        "annual_income" => r.annual_income.map(|c| c.dollars()),
        "dti" => r.dti,
        _ => unreachable!("not a numeric frame column: {name}"),
    }
}

fn categorical_field(r: &LoanRecord, name: &str) -> String {
    match name {
        "member_id" => r.member_id.clone(),
        "state" => r.state.clone(),
        "zip_code" => r.zip_code.clone(),
        "home_ownership" => r.home_ownership.clone(),
        "purpose" => r.purpose.clone(),
        _ => unreachable!("not a categorical frame column: {name}"),
    }
}

impl Frame {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n_rows) {
            return Err(Error::params(format!(
                "column `{}` has {} rows, expected {n_rows}",
                bad.name,
                bad.len()
            )));
        }
        Ok(Frame { n_rows, columns })
    }

    /// The input schema of frames built by [`Frame::from_dataset`].
    pub fn loan_schema() -> Vec<InputColumn> {
        FRAME_COLUMNS
            .iter()
            .map(|&(name, kind)| InputColumn {
                name: name.to_string(),
                kind,
                bounds: bounds_for(name),
            })
            .collect()
    }

    pub fn from_dataset(dataset: &Dataset) -> Frame {
        let records = dataset.records();
        let columns = FRAME_COLUMNS
            .iter()
            .map(|&(name, kind)| match kind {
                ColumnKind::Numeric => Column::numeric(
                    name,
                    records.iter().map(|r| numeric_field(r, name)).collect(),
                    bounds_for(name),
                ),
                ColumnKind::Categorical => Column::categorical(
                    name,
                    records.iter().map(|r| categorical_field(r, name)).collect(),
                ),
            })
            .collect();
        Frame {
            n_rows: records.len(),
            columns,
        }
    }

    /// Reads the `schema` columns present in `required ∪ optional` from a CSV. Columns in
    /// `required` must exist; empty numeric cells become missing values.
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        schema: &[InputColumn],
        required: &[String],
    ) -> Result<(Frame, csv::StringRecord, Vec<csv::StringRecord>)> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = reader.headers()?.clone();
        let index: HashMap<&str, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        if let Some(missing) = required.iter().find(|c| !index.contains_key(c.as_str())) {
            return Err(Error::SchemaMismatch {
                column: missing.clone(),
            });
        }
        let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
        let mut columns = Vec::new();
        for input in schema {
            let Some(&col) = index.get(input.name.as_str()) else {
                continue;
            };
            let cells = rows.iter().map(|r| r.get(col).unwrap_or("").trim());
            let column = match input.kind {
                ColumnKind::Numeric => {
                    let values = cells
                        .enumerate()
                        .map(|(i, cell)| {
                            if cell.is_empty() {
                                return Ok(None);
                            }
                            cell.trim_start_matches('$')
                                .trim_end_matches('%')
                                .parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .map(Some)
                                .ok_or_else(|| Error::Parse {
                                    row: i + 1,
                                    column: input.name.clone(),
                                    message: format!("invalid number `{cell}`"),
                                })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Column::numeric(&input.name, values, input.bounds)
                }
                ColumnKind::Categorical => {
                    Column::categorical(&input.name, cells.map(str::to_string).collect())
                }
            };
            columns.push(column);
        }
        let frame = Frame {
            n_rows: rows.len(),
            columns,
        };
        Ok((frame, headers, rows))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub(crate) fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    pub(crate) fn remove(&mut self, name: &str) -> Option<Column> {
        let pos = self.position(name)?;
        Some(self.columns.remove(pos))
    }

    pub(crate) fn replace_with(&mut self, name: &str, replacement: Vec<Column>) -> Result<()> {
        let pos = self
            .position(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.columns.splice(pos..=pos, replacement);
        Ok(())
    }

    pub fn numeric_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.is_numeric())
    }
}
