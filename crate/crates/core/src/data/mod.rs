//! Loan records, CSV ingestion, synthetic portfolios, and seeded splits.

mod schema;
mod synthetic;

pub use schema::{
    bounds_for, LOSS_BOUNDS, CSV_COLUMNS, HOME_OWNERSHIP_LABELS, INCOME_BOUNDS, PURPOSE_LABELS,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Cents;
use crate::rng::{stream, Stream};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LoanStatus {
    FullyPaid,
    Current,
    ChargedOff,
    Default,
    Late,
    InGrace,
}

impl LoanStatus {
    pub const ALL: [LoanStatus; 6] = [
        LoanStatus::FullyPaid,
        LoanStatus::Current,
        LoanStatus::ChargedOff,
        LoanStatus::Default,
        LoanStatus::Late,
        LoanStatus::InGrace,
    ];

    pub fn is_default(self) -> bool {
        matches!(self, LoanStatus::ChargedOff | LoanStatus::Default)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LoanStatus::FullyPaid => "FULLY_PAID",
            LoanStatus::Current => "CURRENT",
            LoanStatus::ChargedOff => "CHARGED_OFF",
            LoanStatus::Default => "DEFAULT",
            LoanStatus::Late => "LATE",
            LoanStatus::InGrace => "IN_GRACE",
        }
    }
}

impl fmt::Display for LoanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoanStatus {
    type Err = String;

    /// Accepts the canonical upper-case names and the raw Lending Club labels
    /// ("Charged Off", "Late (31-120 days)", ...).
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase();
        let status = match norm.as_str() {
            "fully_paid" | "fully paid" => LoanStatus::FullyPaid,
            "current" => LoanStatus::Current,
            "charged_off" | "charged off" => LoanStatus::ChargedOff,
            "default" => LoanStatus::Default,
            "in_grace" | "in grace period" => LoanStatus::InGrace,
            n if n == "late" || n.starts_with("late (") => LoanStatus::Late,
            _ => return Err(format!("unknown loan status `{s}`")),
        };
        Ok(status)
    }
}

/// One borrower/loan row.
///
/// `home_ownership` and `purpose` keep the raw source labels; binning maps them onto
/// fixed vocabularies. Missing `annual_income` and `dti` are allowed and imputed later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoanRecord {
    pub member_id: String,
    pub loan_amount: Cents,
    pub total_funded_amount: Cents,
    pub term_months: u16,
    pub interest_rate: f64,
    pub annual_income: Option<Cents>,
    pub dti: Option<f64>,
    pub state: String,
    pub zip_code: String,
    pub home_ownership: String,
    pub purpose: String,
    pub loan_status: LoanStatus,
    pub total_recovered_principal: Cents,
    pub recoveries: Cents,
}

impl LoanRecord {
    pub fn defaulted(&self) -> bool {
        self.loan_status.is_default()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.total_funded_amount <= Cents::ZERO {
            return Err("total_funded_amount must be positive".into());
        }
        if self.loan_amount < Cents::ZERO {
            return Err("loan_amount must be non-negative".into());
        }
        if self.total_recovered_principal < Cents::ZERO {
            return Err("total_recovered_principal must be non-negative".into());
        }
        if self.total_recovered_principal > self.total_funded_amount {
            return Err(format!(
                "total_recovered_principal {} exceeds total_funded_amount {}",
                self.total_recovered_principal.to_decimal_string(),
                self.total_funded_amount.to_decimal_string()
            ));
        }
        if self.recoveries < Cents::ZERO {
            return Err("recoveries must be non-negative".into());
        }
        if !matches!(self.term_months, 36 | 60) {
            return Err(format!("term_months must be 36 or 60, got {}", self.term_months));
        }
        if !self.interest_rate.is_finite() || self.interest_rate < 0.0 {
            return Err("interest_rate must be a non-negative percentage".into());
        }
        if self.annual_income.is_some_and(|v| v < Cents::ZERO) {
            return Err("annual_income must be non-negative".into());
        }
        if self.dti.is_some_and(|v| !v.is_finite() || v < 0.0) {
            return Err("dti must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Csv,
    Synthetic,
}

/// An ordered, immutable collection of loan records with unique member ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<LoanRecord>,
    schema_version: String,
    provenance: Provenance,
}

/// Outcome of a CSV load.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub skipped: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Dataset {
    /// Builds a dataset, rejecting invalid records and duplicate member ids.
    pub fn new(records: Vec<LoanRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            record
                .validate()
                .map_err(|message| Error::RecordInvariantViolation { row: i + 1, message })?;
            if !seen.insert(record.member_id.as_str()) {
                return Err(Error::RecordInvariantViolation {
                    row: i + 1,
                    message: format!("duplicate member_id `{}`", record.member_id),
                });
            }
        }
        Ok(Dataset {
            records,
            schema_version: SCHEMA_VERSION.to_string(),
            provenance,
        })
    }

    fn with_records(&self, records: Vec<LoanRecord>) -> Dataset {
        Dataset {
            records,
            schema_version: self.schema_version.clone(),
            provenance: self.provenance,
        }
    }

    pub fn records(&self) -> &[LoanRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn defaulted_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.defaulted()).count() as f64 / self.len() as f64
    }

    /// Keeps the records at `indices`, in ascending index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        self.with_records(sorted.into_iter().map(|i| self.records[i].clone()).collect())
    }

    fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut indices: Vec<usize> = (0..self.len()).collect();
        indices.shuffle(&mut stream(seed, Stream::Sampling));
        indices
    }

    /// Seeded partition into train and test; `|train| = round(fraction·n)`. Both parts
    /// keep the original record order.
    pub fn split(&self, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
        if self.is_empty() {
            return Err(Error::EmptyInput("cannot split an empty dataset".into()));
        }
        if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
            return Err(Error::InvalidFraction(spec.train_fraction));
        }
        let indices = self.shuffled_indices(spec.seed);
        let n_train = (spec.train_fraction * self.len() as f64).round() as usize;
        let (train, test) = indices.split_at(n_train);
        Ok((self.select(train), self.select(test)))
    }

    /// Seeded sample of `round(fraction·n)` records without replacement.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidFraction(fraction));
        }
        if fraction == 1.0 {
            return Ok(self.clone());
        }
        let indices = self.shuffled_indices(seed);
        let n = (fraction * self.len() as f64).round() as usize;
        Ok(self.select(&indices[..n]))
    }

    /// Reads the documented CSV schema. Strict mode fails on the first bad row; lenient
    /// mode skips bad rows and reports them.
    pub fn load_csv(path: impl AsRef<Path>, strict: bool) -> Result<LoadReport> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(file, strict)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, strict: bool) -> Result<LoadReport> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = reader.headers()?.clone();
        let index: HashMap<&str, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let mut columns = [0usize; CSV_COLUMNS.len()];
        for (slot, name) in columns.iter_mut().zip(CSV_COLUMNS) {
            *slot = *index.get(name).ok_or_else(|| Error::SchemaMismatch {
                column: name.to_string(),
            })?;
        }

        let mut records = Vec::new();
        let mut skipped = Vec::new();
        let mut seen = HashSet::new();
        let mut rows_read = 0;
        for (i, row) in reader.records().enumerate() {
            let row_number = i + 1;
            rows_read += 1;
            let row = row?;
            let parsed = parse_row(&row, &columns, row_number).and_then(|record| {
                record.validate().map_err(|message| Error::RecordInvariantViolation {
                    row: row_number,
                    message,
                })?;
                if seen.contains(&record.member_id) {
                    return Err(Error::RecordInvariantViolation {
                        row: row_number,
                        message: format!("duplicate member_id `{}`", record.member_id),
                    });
                }
                Ok(record)
            });
            match parsed {
                Ok(record) => {
                    seen.insert(record.member_id.clone());
                    records.push(record);
                }
                Err(err) if strict => return Err(err),
                Err(err) => {
                    log::warn!("skipping row {row_number}: {err}");
                    skipped.push((row_number, err.to_string()));
                }
            }
        }
        Ok(LoadReport {
            dataset: Dataset {
                records,
                schema_version: SCHEMA_VERSION.to_string(),
                provenance: Provenance::Csv,
            },
            rows_read,
            skipped,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.member_id.clone(),
                r.loan_amount.to_decimal_string(),
                r.total_funded_amount.to_decimal_string(),
                r.term_months.to_string(),
                r.interest_rate.to_string(),
                r.annual_income.map(Cents::to_decimal_string).unwrap_or_default(),
                r.dti.map(|v| v.to_string()).unwrap_or_default(),
                r.state.clone(),
                r.zip_code.clone(),
                r.home_ownership.clone(),
                r.purpose.clone(),
                r.loan_status.to_string(),
                r.total_recovered_principal.to_decimal_string(),
                r.recoveries.to_decimal_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path.as_ref(), &buf)
    }
}

fn parse_row(row: &csv::StringRecord, columns: &[usize], row_number: usize) -> Result<LoanRecord> {
    let field = |k: usize| row.get(columns[k]).unwrap_or("").trim();
    let err = |k: usize, message: String| Error::Parse {
        row: row_number,
        column: CSV_COLUMNS[k].to_string(),
        message,
    };
    let cents = |k: usize| {
        Cents::parse(field(k)).ok_or_else(|| err(k, format!("invalid amount `{}`", field(k))))
    };
    let optional_cents = |k: usize| -> Result<Option<Cents>> {
        if field(k).is_empty() {
            Ok(None)
        } else {
            cents(k).map(Some)
        }
    };
    let number = |k: usize| -> Result<f64> {
        field(k)
            .trim_end_matches('%')
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(k, format!("invalid number `{}`", field(k))))
    };
    let optional_number = |k: usize| -> Result<Option<f64>> {
        if field(k).is_empty() {
            Ok(None)
        } else {
            number(k).map(Some)
        }
    };

    let member_id = field(0).to_string();
    if member_id.is_empty() {
        return Err(err(0, "member_id is empty".into()));
    }
    let term_text = field(3).trim_end_matches("months").trim();
    let term_months = term_text
        .parse::<u16>()
        .map_err(|_| err(3, format!("invalid term `{}`", field(3))))?;
    Ok(LoanRecord {
        member_id,
        loan_amount: cents(1)?,
        total_funded_amount: cents(2)?,
        term_months,
        interest_rate: number(4)?,
        annual_income: optional_cents(5)?,
        dti: optional_number(6)?,
        state: field(7).to_string(),
        zip_code: field(8).to_string(),
        home_ownership: field(9).to_string(),
        purpose: field(10).to_string(),
        loan_status: field(11).parse().map_err(|m| err(11, m))?,
        total_recovered_principal: cents(12)?,
        recoveries: cents(13)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> LoanRecord {
        LoanRecord {
            member_id: id.into(),
            loan_amount: Cents::from_whole_dollars(10_000),
            total_funded_amount: Cents::from_whole_dollars(10_000),
            term_months: 36,
            interest_rate: 12.5,
            annual_income: Some(Cents::from_whole_dollars(60_000)),
            dti: Some(15.2),
            state: "CA".into(),
            zip_code: "941xx".into(),
            home_ownership: "RENT".into(),
            purpose: "credit_card".into(),
            loan_status: LoanStatus::FullyPaid,
            total_recovered_principal: Cents::from_whole_dollars(10_000),
            recoveries: Cents::ZERO,
        }
    }

    fn csv_of(records: &[LoanRecord]) -> String {
        let ds = Dataset::new(records.to_vec(), Provenance::Csv).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let text = csv_of(&[record("a"), record("b"), record("c")]);
        let report = Dataset::read_csv(text.as_bytes(), true).unwrap();
        assert_eq!(report.dataset.len(), 3);
        assert_eq!(report.rows_read, 3);
    }

    #[test]
    fn missing_column_is_named() {
        let text = csv_of(&[record("a")]).replace(",recoveries", ",recovery_amt");
        let err = Dataset::read_csv(text.as_bytes(), true).unwrap_err();
        match err {
            Error::SchemaMismatch { column } => assert_eq!(column, "recoveries"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn recovered_above_funded_is_rejected_in_strict_mode() {
        let mut bad = record("b");
        bad.total_recovered_principal = Cents::from_whole_dollars(20_000);
        let mut text = csv_of(&[record("a")]);
        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.serialize((
                "b", "10000.00", "10000.00", "36", "12.5", "60000.00", "15.2", "CA", "941xx",
                "RENT", "credit_card", "FULLY_PAID", "20000.00", "0.00",
            ))
            .unwrap();
        }
        text.push_str(std::str::from_utf8(&buf).unwrap());
        let err = Dataset::read_csv(text.as_bytes(), true).unwrap_err();
        assert!(matches!(err, Error::RecordInvariantViolation { row: 2, .. }), "{err:?}");

        let lenient = Dataset::read_csv(text.as_bytes(), false).unwrap();
        assert_eq!(lenient.dataset.len(), 1);
        assert_eq!(lenient.skipped.len(), 1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parse_error_reports_row_and_column() {
        let text = csv_of(&[record("a")]).replace("12.5", "twelve");
        match Dataset::read_csv(text.as_bytes(), true).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "interest_rate");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_optional_fields_round_trip() {
        let mut r = record("a");
        r.annual_income = None;
        r.dti = None;
        let text = csv_of(&[r.clone()]);
        let report = Dataset::read_csv(text.as_bytes(), true).unwrap();
        assert_eq!(report.dataset.records()[0], r);
    }

    #[test]
    fn lending_club_status_labels() {
        assert_eq!("Charged Off".parse::<LoanStatus>().unwrap(), LoanStatus::ChargedOff);
        assert_eq!("Late (31-120 days)".parse::<LoanStatus>().unwrap(), LoanStatus::Late);
        assert!("Sold".parse::<LoanStatus>().is_err());
    }

    #[test]
    fn duplicate_member_ids_rejected() {
        assert!(Dataset::new(vec![record("a"), record("a")], Provenance::Csv).is_err());
    }

    #[test]
    fn split_sizes_and_subsample_identity() {
        let records: Vec<_> = (0..10).map(|i| record(&format!("m{i}"))).collect();
        let ds = Dataset::new(records, Provenance::Synthetic).unwrap();
        let (train, test) = ds.split(SplitSpec { train_fraction: 0.8, seed: 1 }).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(ds.subsample(1.0, 3).unwrap(), ds);
        assert_eq!(ds.subsample(0.5, 3).unwrap().len(), 5);
        assert!(matches!(ds.subsample(0.0, 3), Err(Error::InvalidFraction(_))));
        assert!(matches!(ds.subsample(1.5, 3), Err(Error::InvalidFraction(_))));
    }
}
