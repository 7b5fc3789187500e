//! Repeated-subsample comparison of the private and exact models on a synthetic
//! portfolio, with the per-run table, averages and timing summary.
//!
//! `cargo run --release --example dp_vs_exact -- [n] [runs] [epsilon]`

use dpcredit::data::{generate_synthetic, SyntheticConfig};
use dpcredit::evaluation::{aggregate, format_percent_truncated, run_experiment, timing_summary, ExperimentConfig};
use dpcredit::privacy::PrivacyParams;

fn main() -> dpcredit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let n_runs: u32 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let epsilon: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(8.0);

    let portfolio = generate_synthetic(n, 7, &SyntheticConfig::default())?;
    let config = ExperimentConfig {
        n_runs,
        seed: 11,
        budget: PrivacyParams::new(epsilon, 1e-5)?,
        ..ExperimentConfig::default()
    };
    let reports = run_experiment(&portfolio, &config, config.accountant_factory()?)?;

    println!("{:>4} {:>14} {:>14} {:>14} {:>14} {:>8} {:>8}", "run", "actual", "dp actual", "NDPM", "DPM", "NDPM %", "DPM %");
    for r in &reports {
        println!(
            "{:>4} {:>14} {:>14} {:>14} {:>14} {:>8} {:>8}",
            r.run_id,
            r.actual_total.whole_dollars(),
            r.dp_actual_total.whole_dollars(),
            r.predicted_total_ndpm.whole_dollars(),
            r.predicted_total_dpm.whole_dollars(),
            format_percent_truncated(r.rel_diff_ndpm),
            format_percent_truncated(r.rel_diff_dpm),
        );
    }
    let summary = aggregate(&reports)?;
    println!("\n{summary}");
    let gap = (summary.dpm.avg_predicted.dollars() - summary.ndpm.avg_predicted.dollars()).abs()
        / summary.ndpm.avg_predicted.dollars();
    println!("DPM vs NDPM predicted gap: {:.2}%", 100.0 * gap);
    println!("\n{}", timing_summary(&reports));
    Ok(())
}
