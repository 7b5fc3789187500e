//! Repeated-subsample comparison of private (DPM) and non-private (NDPM) models.
//!
//! Each run subsamples the portfolio, fits both variants on the sample, scores the
//! same sample, and compares predicted totals with realized loss. The private variant
//! compares against a DP release of the realized total, since an analyst without
//! exact access could not compute the true one.

mod report;

pub use report::{
    aggregate, emit_figure_data, format_percent_truncated, read_figure_csv, read_replay_csv, timing_summary,
    write_aggregate_json, write_runs_csv, AggregateReport, FigureSeries, TimingSummary, VariantAggregate,
    FIGURE_FILES, RUNS_CSV_HEADER,
};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credit_risk::{actual_loss, total_expected_loss, BudgetPlan, CreditRiskModel, ModelConfigs, Training};
use crate::data::{Dataset, SplitSpec, LOSS_BOUNDS};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::privacy::{dp_sum, LedgerEntry, PrivacyAccountant, PrivacyParams};
use crate::rng::{child_seed, named_seed, stream, Stream};

/// `100 · (actual − predicted) / predicted`.
pub fn relative_difference(actual: Cents, predicted: Cents) -> Result<f64> {
    if predicted <= Cents::ZERO {
        return Err(Error::DivisionByZero(format!(
            "relative difference against predicted total {}",
            predicted.to_decimal_string()
        )));
    }
    let diff = i128::from(actual.0) - i128::from(predicted.0);
    Ok(100.0 * diff as f64 / predicted.0 as f64)
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_s: f64,
    pub train_s: f64,
    pub predict_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub ndpm: StageTimings,
    pub dpm: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: u32,
    pub actual_total: Cents,
    pub dp_actual_total: Cents,
    pub predicted_total_ndpm: Cents,
    pub predicted_total_dpm: Cents,
    /// Percent, against `actual_total`.
    pub rel_diff_ndpm: f64,
    /// Percent, against `dp_actual_total`.
    pub rel_diff_dpm: f64,
    pub timings: RunTimings,
    /// The private variant's ledger for this run; empty for replayed runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ledger: Vec<LedgerEntry>,
}

impl RunReport {
    /// Builds a report from totals, computing both relative differences.
    pub fn from_totals(
        run_id: u32,
        actual_total: Cents,
        dp_actual_total: Cents,
        predicted_total_ndpm: Cents,
        predicted_total_dpm: Cents,
    ) -> Result<RunReport> {
        Ok(RunReport {
            run_id,
            actual_total,
            dp_actual_total,
            predicted_total_ndpm,
            predicted_total_dpm,
            rel_diff_ndpm: relative_difference(actual_total, predicted_total_ndpm)?,
            rel_diff_dpm: relative_difference(dp_actual_total, predicted_total_dpm)?,
            timings: RunTimings::default(),
            ledger: Vec::new(),
        })
    }

    /// The result columns, without timings or ledger timestamps.
    pub fn totals(&self) -> (u32, Cents, Cents, Cents, Cents, u64, u64) {
        (
            self.run_id,
            self.actual_total,
            self.dp_actual_total,
            self.predicted_total_ndpm,
            self.predicted_total_dpm,
            self.rel_diff_ndpm.to_bits(),
            self.rel_diff_dpm.to_bits(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_runs: u32,
    pub subsample_fraction: f64,
    pub seed: u64,
    /// When set, each subsample is split with this train fraction and scored on the
    /// held-out part instead of the training sample.
    pub held_out: Option<f64>,
    /// Budget for the private model (preprocessing and the component models).
    pub budget: PrivacyParams,
    pub plan: BudgetPlan,
    /// Extra ε spent on releasing each run's realized loss total.
    pub report_epsilon: f64,
    pub exact: ModelConfigs,
    pub private: ModelConfigs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_runs: 8,
            subsample_fraction: 0.5,
            seed: 0,
            held_out: None,
            budget: PrivacyParams::new(8.0, 1e-5).expect("valid default budget"),
            plan: BudgetPlan::default(),
            report_epsilon: 1.0,
            exact: ModelConfigs::exact_default(),
            private: ModelConfigs::private_default(),
        }
    }
}

impl ExperimentConfig {
    /// Total per-run budget: the model budget plus the report release.
    pub fn run_budget(&self) -> Result<PrivacyParams> {
        PrivacyParams::new(self.budget.epsilon() + self.report_epsilon, self.budget.delta())
    }

    /// A factory handing every run a fresh accountant holding [`Self::run_budget`].
    pub fn accountant_factory(&self) -> Result<impl Fn(u32) -> PrivacyAccountant + Sync> {
        let budget = self.run_budget()?;
        Ok(move |_run: u32| PrivacyAccountant::new(budget))
    }
}

/// Realized loss of every record in `dataset`.
pub fn actual_total(dataset: &Dataset) -> Cents {
    dataset.records().iter().map(actual_loss).sum()
}

/// DP release of the realized loss total, with per-record losses clipped to
/// [`LOSS_BOUNDS`].
pub fn dp_actual_total(
    dataset: &Dataset,
    epsilon: f64,
    accountant: &PrivacyAccountant,
    seed: u64,
) -> Result<Cents> {
    accountant.consume("report/actual_total", PrivacyParams::pure(epsilon)?)?;
    let losses: Vec<f64> = dataset.records().iter().map(|r| actual_loss(r).dollars()).collect();
    let released = dp_sum(&losses, LOSS_BOUNDS, epsilon, &mut stream(seed, Stream::Noise))?;
    Ok(Cents::from_dollars(released))
}

fn run_variant(
    train: &Dataset,
    eval: &Dataset,
    configs: &ModelConfigs,
    seed: u64,
    training: Training<'_>,
) -> Result<(Cents, StageTimings)> {
    let start = Instant::now();
    let pipeline = CreditRiskModel::fit_pipeline(train, configs, seed, training)?;
    let features = pipeline.apply(train)?;
    let fitted = Instant::now();
    let model = CreditRiskModel::train_models(pipeline, &features, configs, seed, training)?;
    let trained = Instant::now();
    let total = total_expected_loss(&model.predict_losses(eval)?);
    let predicted = Instant::now();
    Ok((
        total,
        StageTimings {
            preprocess_s: (fitted - start).as_secs_f64(),
            train_s: (trained - fitted).as_secs_f64(),
            predict_s: (predicted - trained).as_secs_f64(),
        },
    ))
}

fn run_once(
    dataset: &Dataset,
    config: &ExperimentConfig,
    run_id: u32,
    accountant: PrivacyAccountant,
) -> Result<RunReport> {
    let run_seed = child_seed(config.seed, u64::from(run_id));
    let sample = dataset.subsample(config.subsample_fraction, run_seed)?;
    let (train, eval) = match config.held_out {
        Some(train_fraction) => sample.split(SplitSpec {
            train_fraction,
            seed: run_seed,
        })?,
        None => (sample.clone(), sample),
    };

    let (predicted_ndpm, ndpm) = run_variant(&train, &eval, &config.exact, run_seed, Training::Exact)?;
    let private = Training::Private {
        accountant: &accountant,
        budget: config.budget,
        plan: config.plan,
    };
    let (predicted_dpm, dpm) = run_variant(&train, &eval, &config.private, run_seed, private)?;

    let actual = actual_total(&eval);
    let dp_actual = dp_actual_total(&eval, config.report_epsilon, &accountant, named_seed(run_seed, "report"))?;
    let mut report = RunReport::from_totals(run_id, actual, dp_actual, predicted_ndpm, predicted_dpm)?;
    report.timings = RunTimings { ndpm, dpm };
    report.ledger = accountant.ledger();
    Ok(report)
}

/// Runs `config.n_runs` independent runs (ids 1..=n) in parallel. Run `r` subsamples
/// with seed `seed ⊕ r` and gets its own accountant from `accountants`. Reports come
/// back ordered by run id; failures carry the run id.
pub fn run_experiment<F>(dataset: &Dataset, config: &ExperimentConfig, accountants: F) -> Result<Vec<RunReport>>
where
    F: Fn(u32) -> PrivacyAccountant + Sync,
{
    if config.n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    (1..=config.n_runs)
        .into_par_iter()
        .map(|run_id| {
            run_once(dataset, config, run_id, accountants(run_id)).map_err(|e| Error::Run {
                run_id,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: i64) -> Cents {
        Cents::from_whole_dollars(x)
    }

    #[test]
    fn relative_difference_values() {
        assert!((relative_difference(d(8_428_504), d(7_558_465)).unwrap() - 11.51).abs() < 0.01);
        assert!((relative_difference(d(8_405_516), d(7_787_930)).unwrap() - 7.93).abs() < 0.01);
        assert_eq!(relative_difference(d(123), d(123)).unwrap(), 0.0);
        assert!(matches!(relative_difference(d(1), d(0)), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn zero_runs_rejected() {
        let ds = crate::data::generate_synthetic(50, 1, &Default::default()).unwrap();
        let config = ExperimentConfig {
            n_runs: 0,
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&ds, &config, config.accountant_factory().unwrap()).is_err());
    }
}
