//! Aggregates the bundled reference run totals and writes the report files.
//!
//! `cargo run --example replay_reference_runs -- [output dir]`

use std::path::PathBuf;

use dpcredit::evaluation::{aggregate, emit_figure_data, read_replay_csv, write_aggregate_json, write_runs_csv};

const REFERENCE_RUNS: &str = include_str!("../fixtures/reference_runs.csv");

fn main() -> dpcredit::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dpcredit-replay"));
    let reports = read_replay_csv(REFERENCE_RUNS.as_bytes())?;
    for r in &reports {
        println!("run {}: NDPM {:.3}%  DPM {:.3}%", r.run_id, r.rel_diff_ndpm, r.rel_diff_dpm);
    }
    let summary = aggregate(&reports)?;
    println!("\n{summary}");

    write_runs_csv(&reports, &out.join("runs.csv"))?;
    write_aggregate_json(&summary, &out.join("aggregate.json"))?;
    emit_figure_data(&reports, &out.join("figures"))?;
    println!("\nreport files in {}", out.display());
    Ok(())
}
