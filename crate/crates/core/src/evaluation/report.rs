use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunReport, StageTimings};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::money::Cents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub avg_actual: Cents,
    pub avg_predicted: Cents,
    /// Percent; the mean of the per-run relative differences.
    pub avg_rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_runs: usize,
    pub ndpm: VariantAggregate,
    pub dpm: VariantAggregate,
}

/// Column-wise means. Currency means are rounded to the cent.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no run reports to aggregate".into()));
    }
    let mean_cents = |f: fn(&RunReport) -> Cents| {
        Cents::mean(&reports.iter().map(f).collect::<Vec<_>>()).expect("nonempty")
    };
    let mean = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    Ok(AggregateReport {
        n_runs: reports.len(),
        ndpm: VariantAggregate {
            avg_actual: mean_cents(|r| r.actual_total),
            avg_predicted: mean_cents(|r| r.predicted_total_ndpm),
            avg_rel_diff: mean(|r| r.rel_diff_ndpm),
        },
        dpm: VariantAggregate {
            avg_actual: mean_cents(|r| r.dp_actual_total),
            avg_predicted: mean_cents(|r| r.predicted_total_dpm),
            avg_rel_diff: mean(|r| r.rel_diff_dpm),
        },
    })
}

/// Two decimals, truncated toward zero (17.216 prints as 17.21).
pub fn format_percent_truncated(value: f64) -> String {
    let truncated = (value * 100.0).trunc() / 100.0;
    format!("{truncated:.2}")
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>16} {:>16} {:>10}", "variant", "avg actual", "avg predicted", "avg diff %")?;
        for (name, v) in [("NDPM", &self.ndpm), ("DPM", &self.dpm)] {
            writeln!(
                f,
                "{:<10} {:>16} {:>16} {:>10}",
                name,
                v.avg_actual.to_string(),
                v.avg_predicted.to_string(),
                format_percent_truncated(v.avg_rel_diff)
            )?;
        }
        write!(f, "runs: {}", self.n_runs)
    }
}

#[derive(Serialize)]
struct VariantJson {
    avg_actual: i64,
    avg_predicted: i64,
    avg_rel_diff: f64,
}

#[derive(Serialize)]
struct AggregateJson {
    n_runs: usize,
    ndpm: VariantJson,
    dpm: VariantJson,
}

/// Whole-dollar averages and full-precision percentages.
pub fn write_aggregate_json(report: &AggregateReport, path: &Path) -> Result<()> {
    let variant = |v: &VariantAggregate| VariantJson {
        avg_actual: v.avg_actual.whole_dollars(),
        avg_predicted: v.avg_predicted.whole_dollars(),
        avg_rel_diff: v.avg_rel_diff,
    };
    let json = AggregateJson {
        n_runs: report.n_runs,
        ndpm: variant(&report.ndpm),
        dpm: variant(&report.dpm),
    };
    write_atomic(path, &pretty_json(&json)?)
}

pub const RUNS_CSV_HEADER: [&str; 7] = [
    "run",
    "actual_total",
    "dp_actual_total",
    "predicted_total_ndpm",
    "predicted_total_dpm",
    "rel_diff_ndpm",
    "rel_diff_dpm",
];

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

/// One row per run; dollars with cents, percentages to three decimals.
pub fn write_runs_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    let rows = reports.iter().map(|r| {
        vec![
            r.run_id.to_string(),
            r.actual_total.to_decimal_string(),
            r.dp_actual_total.to_decimal_string(),
            r.predicted_total_ndpm.to_decimal_string(),
            r.predicted_total_dpm.to_decimal_string(),
            format!("{:.3}", r.rel_diff_ndpm),
            format!("{:.3}", r.rel_diff_dpm),
        ]
    });
    write_atomic(path, &csv_bytes(&RUNS_CSV_HEADER, rows)?)
}

pub const FIGURE_FILES: [&str; 3] = ["actual_loss.csv", "predicted_loss.csv", "relative_difference.csv"];

/// One figure's data: a value per run for each variant.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSeries {
    pub run: Vec<u32>,
    pub ndpm: Vec<f64>,
    pub dpm: Vec<f64>,
}

/// Writes the three plotting CSVs (`run,ndpm,dpm`) into `dir`: realized totals (the DPM
/// column is the DP release), predicted totals, and relative differences. Dollars keep
/// their cents and percentages keep full precision.
pub fn emit_figure_data(reports: &[RunReport], dir: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no run reports to plot".into()));
    }
    let header = ["run", "ndpm", "dpm"];
    let money = |f: fn(&RunReport) -> (Cents, Cents)| {
        reports.iter().map(move |r| {
            let (a, b) = f(r);
            vec![r.run_id.to_string(), a.to_decimal_string(), b.to_decimal_string()]
        })
    };
    write_atomic(
        &dir.join(FIGURE_FILES[0]),
        &csv_bytes(&header, money(|r| (r.actual_total, r.dp_actual_total)))?,
    )?;
    write_atomic(
        &dir.join(FIGURE_FILES[1]),
        &csv_bytes(&header, money(|r| (r.predicted_total_ndpm, r.predicted_total_dpm)))?,
    )?;
    let percent = reports
        .iter()
        .map(|r| vec![r.run_id.to_string(), r.rel_diff_ndpm.to_string(), r.rel_diff_dpm.to_string()]);
    write_atomic(&dir.join(FIGURE_FILES[2]), &csv_bytes(&header, percent)?)
}

/// Reads a figure CSV back.
pub fn read_figure_csv<R: Read>(reader: R) -> Result<FigureSeries> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["run", "ndpm", "dpm"] {
        return Err(Error::SchemaMismatch {
            column: "run,ndpm,dpm".into(),
        });
    }
    let mut series = FigureSeries {
        run: Vec::new(),
        ndpm: Vec::new(),
        dpm: Vec::new(),
    };
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let parse = |col: usize, name: &str| -> Result<f64> {
            record[col].parse::<f64>().map_err(|e| Error::Parse {
                row: i + 1,
                column: name.into(),
                message: e.to_string(),
            })
        };
        series.run.push(parse(0, "run")? as u32);
        series.ndpm.push(parse(1, "ndpm")?);
        series.dpm.push(parse(2, "dpm")?);
    }
    Ok(series)
}

/// Reads externally supplied run totals (`run, actual_total, dp_actual_total,
/// predicted_total_ndpm, predicted_total_dpm`; extra columns ignored; `$` and thousands
/// separators tolerated) and recomputes the relative differences from the totals.
pub fn read_replay_csv<R: Read>(reader: R) -> Result<Vec<RunReport>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch { column: name.into() })
    };
    let run_col = position("run")?;
    let cols = [
        position("actual_total")?,
        position("dp_actual_total")?,
        position("predicted_total_ndpm")?,
        position("predicted_total_dpm")?,
    ];
    let mut reports = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let run_id = record[run_col].parse::<u32>().map_err(|e| Error::Parse {
            row,
            column: "run".into(),
            message: e.to_string(),
        })?;
        let mut totals = [Cents::ZERO; 4];
        for (slot, &col) in totals.iter_mut().zip(&cols) {
            let cell = record[col].replace(',', "");
            *slot = Cents::parse(&cell).ok_or_else(|| Error::Parse {
                row,
                column: headers[col].to_string(),
                message: format!("invalid amount `{}`", &record[col]),
            })?;
        }
        reports.push(RunReport::from_totals(run_id, totals[0], totals[1], totals[2], totals[3])?);
    }
    if reports.is_empty() {
        return Err(Error::EmptyInput("replay file has no runs".into()));
    }
    Ok(reports)
}

/// Mean stage timings per variant and their DPM/NDPM ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub n_runs: usize,
    pub ndpm: StageTimings,
    pub dpm: StageTimings,
    /// `None` where the NDPM mean is zero.
    pub ratio_preprocess: Option<f64>,
    pub ratio_train: Option<f64>,
    pub ratio_predict: Option<f64>,
}

pub fn timing_summary(reports: &[RunReport]) -> TimingSummary {
    let n = reports.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RunReport) -> StageTimings| {
        let mut m = StageTimings::default();
        for r in reports {
            let t = f(r);
            m.preprocess_s += t.preprocess_s / n;
            m.train_s += t.train_s / n;
            m.predict_s += t.predict_s / n;
        }
        m
    };
    let ndpm = mean(&|r| r.timings.ndpm);
    let dpm = mean(&|r| r.timings.dpm);
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    TimingSummary {
        n_runs: reports.len(),
        ratio_preprocess: ratio(dpm.preprocess_s, ndpm.preprocess_s),
        ratio_train: ratio(dpm.train_s, ndpm.train_s),
        ratio_predict: ratio(dpm.predict_s, ndpm.predict_s),
        ndpm,
        dpm,
    }
}

impl fmt::Display for TimingSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ratio = |r: Option<f64>| r.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}x"));
        writeln!(f, "{:<12} {:>12} {:>12} {:>10}", "stage", "NDPM (s)", "DPM (s)", "DPM/NDPM")?;
        for (stage, a, b, r) in [
            ("preprocess", self.ndpm.preprocess_s, self.dpm.preprocess_s, self.ratio_preprocess),
            ("train", self.ndpm.train_s, self.dpm.train_s, self.ratio_train),
            ("predict", self.ndpm.predict_s, self.dpm.predict_s, self.ratio_predict),
        ] {
            writeln!(f, "{stage:<12} {a:>12.4} {b:>12.4} {:>10}", ratio(r))?;
        }
        write!(f, "mean over {} run(s)", self.n_runs)
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub(crate) fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::RunTimings;

    fn report(run_id: u32, t: StageTimings) -> RunReport {
        let mut r = RunReport::from_totals(run_id, Cents(300), Cents(310), Cents(200), Cents(250)).unwrap();
        r.timings = RunTimings { ndpm: t, dpm: t };
        r
    }

    #[test]
    fn aggregate_of_nothing() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn truncation_display() {
        assert_eq!(format_percent_truncated(17.2166), "17.21");
        assert_eq!(format_percent_truncated(19.375), "19.37");
        assert_eq!(format_percent_truncated(-1.239), "-1.23");
    }

    #[test]
    fn timing_means_and_ratios() {
        let a = StageTimings {
            preprocess_s: 1.0,
            train_s: 2.0,
            predict_s: 0.0,
        };
        let b = StageTimings {
            preprocess_s: 3.0,
            train_s: 4.0,
            predict_s: 0.0,
        };
        let s = timing_summary(&[report(1, a), report(2, b)]);
        assert_eq!(s.ndpm.preprocess_s, 2.0);
        assert_eq!(s.dpm.train_s, 3.0);
        assert_eq!(s.ratio_train, Some(1.0));
        assert_eq!(s.ratio_predict, None);
        let single = timing_summary(&[report(1, a)]);
        assert_eq!(single.ndpm, a);
    }

    #[test]
    fn figure_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reports: Vec<RunReport> = (1..=8).map(|i| report(i, StageTimings::default())).collect();
        emit_figure_data(&reports, dir.path()).unwrap();
        for file in FIGURE_FILES {
            let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
            assert_eq!(text.lines().count(), 9);
            assert!(text.starts_with("run,ndpm,dpm\n"));
        }
        let rel = read_figure_csv(std::fs::File::open(dir.path().join(FIGURE_FILES[2])).unwrap()).unwrap();
        assert_eq!(rel.ndpm[0].to_bits(), reports[0].rel_diff_ndpm.to_bits());
        let actual = read_figure_csv(std::fs::File::open(dir.path().join(FIGURE_FILES[0])).unwrap()).unwrap();
        assert_eq!(Cents::from_dollars(actual.dpm[3]), reports[3].dp_actual_total);
    }

    #[test]
    fn replay_tolerates_dollar_signs() {
        let csv = "run,actual_total,dp_actual_total,predicted_total_ndpm,predicted_total_dpm\n1,\"$8,428,504\",$8405516,7558465,7787930\n";
        let reports = read_replay_csv(csv.as_bytes()).unwrap();
        assert_eq!(reports[0].actual_total, Cents::from_whole_dollars(8_428_504));
        assert!((reports[0].rel_diff_dpm - 7.930).abs() < 0.001);
        let missing = "run,actual_total\n1,5\n";
        assert!(matches!(read_replay_csv(missing.as_bytes()), Err(Error::SchemaMismatch { .. })));
    }
}
