//! The `dpcredit` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage or configuration, 3 privacy budget,
//! 4 training, 5 schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::credit_risk::{total_expected_loss, BudgetPlan, CreditRiskModel, ModelConfigs, Training};
use crate::data::{generate_synthetic, Dataset, SplitSpec, SyntheticConfig};
use crate::error::Error;
use crate::evaluation::{
    aggregate, emit_figure_data, format_percent_truncated, read_replay_csv, run_experiment, timing_summary,
    write_aggregate_json, write_runs_csv, ExperimentConfig, RunReport,
};
use crate::io::write_atomic;
use crate::portable::{export_model, import_model, standalone_predict, PortableModel, PortableModelDocument};
use crate::privacy::{LedgerEntry, Mode, PrivacyAccountant, PrivacyParams};

#[derive(Debug, Parser)]
#[command(name = "dpcredit", version, about = "Differentially private credit-risk modeling")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Log filter, e.g. `info` or `dpcredit=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic loan portfolio as CSV.
    Generate {
        /// Number of records.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// Expected fraction of defaulted loans.
        #[arg(long, default_value_t = 0.12)]
        default_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a loan CSV and report what would be loaded.
    IngestCheck {
        path: PathBuf,
        /// Fail on the first invalid row instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Train a credit-risk model and export it with its privacy ledger.
    Train,
    /// Run the repeated-subsample comparison, or aggregate supplied run totals.
    Evaluate {
        /// CSV of run totals to aggregate instead of training.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Score a CSV with an exported model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Report spend against the configured budget, or the planned allocation.
    Budget {
        /// A `ledger.json` written by `train`.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Re-export a model document, optionally extracting one component model.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Component::Bundle)]
        component: Component,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Component {
    Bundle,
    Pd,
    Ccf,
    LgdNonzero,
    LgdRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// A loan CSV; relative paths resolve against the config file's directory.
    Source(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub default_rate: f64,
}

fn default_rate() -> f64 {
    SyntheticConfig::default().default_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    /// How `train` fits the model; `evaluate` always runs both.
    pub mode: Mode,
    pub epsilon: f64,
    pub delta: f64,
    pub budget_plan: BudgetPlan,
    /// Extra ε per evaluation run for releasing the realized loss total.
    pub report_epsilon: f64,
}

impl Default for PrivacySection {
    fn default() -> Self {
        PrivacySection {
            mode: Mode::Private,
            epsilon: 8.0,
            delta: 1e-5,
            budget_plan: BudgetPlan::default(),
            report_epsilon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub exact: ModelConfigs,
    pub private: ModelConfigs,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            exact: ModelConfigs::exact_default(),
            private: ModelConfigs::private_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub n_runs: u32,
    pub subsample_fraction: f64,
    /// Train fraction for scoring on a held-out part of each subsample.
    pub held_out: Option<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            n_runs: 8,
            subsample_fraction: 0.5,
            held_out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
        }
    }
}

/// The run configuration. Only `data` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub data: DataConfig,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub privacy: PrivacySection,
    #[serde(default)]
    pub models: ModelsSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfigFile {
    pub fn from_json(bytes: &[u8]) -> Result<RunConfigFile, CliError> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            CliError::usage(format!("invalid configuration at `{}`: {}", e.path(), e.inner()))
        })
    }

    pub fn load(path: &Path) -> Result<RunConfigFile, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::from(Error::io(path, e)))?;
        let mut config = RunConfigFile::from_json(&bytes)?;
        if let DataConfig::Source(source) = &mut config.data {
            if source.is_relative() {
                if let Some(dir) = path.parent() {
                    *source = dir.join(&*source);
                }
            }
        }
        Ok(config)
    }

    fn budget(&self) -> Result<PrivacyParams, CliError> {
        PrivacyParams::new(self.privacy.epsilon, self.privacy.delta)
            .map_err(|e| CliError::usage(format!("privacy: {e}")))
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// The exit code for a library error.
pub fn exit_code(error: &Error) -> u8 {
    match error.root() {
        Error::Io { .. } => 1,
        Error::InvalidConfig(_) | Error::InvalidFraction(_) => 2,
        Error::BudgetExhausted { .. } => 3,
        Error::SchemaMismatch { .. }
        | Error::Parse { .. }
        | Error::RecordInvariantViolation { .. }
        | Error::UnknownColumn(_)
        | Error::VersionMismatch { .. }
        | Error::MalformedDocument { .. }
        | Error::Csv(_) => 5,
        _ => 4,
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> CliError {
        CliError {
            code: exit_code(&error),
            message: error.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses the process arguments, runs the command and returns its exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(usize::from(threads)).build_global() {
            warn!("thread pool already initialised: {e}");
        }
    }
    match &cli.command {
        Command::Generate { n, default_rate, out } => generate(cli, *n, *default_rate, out),
        Command::IngestCheck { path, strict } => ingest_check(path, *strict),
        Command::Train => train(cli),
        Command::Evaluate { replay } => evaluate(cli, replay.as_deref()),
        Command::Predict { model, input, output } => predict(model, input, output),
        Command::Budget { ledger } => budget(cli, ledger.as_deref()),
        Command::Export { model, component, out } => export(model, *component, out),
    }
}

fn require_config(cli: &Cli) -> CliResult<RunConfigFile> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::usage("this command requires --config"))?;
    RunConfigFile::load(path)
}

fn out_dir(cli: &Cli, config: Option<&RunConfigFile>) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| config.map(|c| c.output.directory.clone()))
        .unwrap_or_else(|| OutputSection::default().directory)
}

fn load_data(config: &RunConfigFile) -> CliResult<Dataset> {
    let dataset = match &config.data {
        DataConfig::Source(path) => {
            let report = Dataset::load_csv(path, false)?;
            if !report.skipped.is_empty() {
                warn!("skipped {} invalid row(s) in {}", report.skipped.len(), path.display());
            }
            report.dataset
        }
        DataConfig::Synthetic(spec) => {
            if spec.n == 0 {
                return Err(CliError::usage("data.synthetic.n must be at least 1"));
            }
            let synthetic = SyntheticConfig {
                default_rate: spec.default_rate,
                ..SyntheticConfig::default()
            };
            generate_synthetic(spec.n, spec.seed, &synthetic)?
        }
    };
    info!("loaded {} records", dataset.len());
    Ok(dataset)
}

fn generate(cli: &Cli, n: u64, default_rate: f64, out: &Path) -> CliResult {
    let n = usize::try_from(n).map_err(|_| CliError::usage("--n is too large"))?;
    let config = SyntheticConfig {
        default_rate,
        ..SyntheticConfig::default()
    };
    let dataset = generate_synthetic(n, cli.seed.unwrap_or(0), &config).map_err(|e| match e {
        Error::InvalidConfig(m) | Error::InvalidParams(m) => CliError::usage(format!("--default-rate: {m}")),
        other => other.into(),
    })?;
    let mut bytes = Vec::new();
    dataset.write_csv(&mut bytes)?;
    write_atomic(out, &bytes)?;
    println!("wrote {} records to {}", dataset.len(), out.display());
    Ok(())
}

fn ingest_check(path: &Path, strict: bool) -> CliResult {
    let report = Dataset::load_csv(path, strict)?;
    println!("rows read:  {}", report.rows_read);
    println!("accepted:   {}", report.dataset.len());
    println!("skipped:    {}", report.skipped.len());
    for (row, reason) in report.skipped.iter().take(10) {
        println!("  row {row}: {reason}");
    }
    if report.skipped.len() > 10 {
        println!("  ... {} more", report.skipped.len() - 10);
    }
    println!("defaulted:  {:.4}", report.dataset.defaulted_fraction());
    Ok(())
}

fn write_ledger(path: &Path, entries: &[LedgerEntry]) -> CliResult {
    let mut bytes = serde_json::to_vec_pretty(entries).map_err(Error::from)?;
    bytes.push(b'\n');
    Ok(write_atomic(path, &bytes)?)
}

fn train(cli: &Cli) -> CliResult {
    let config = require_config(cli)?;
    let seed = cli.seed.unwrap_or(config.seed);
    let dir = out_dir(cli, Some(&config));
    let dataset = load_data(&config)?;
    let (train_set, eval_set) = match &config.split {
        Some(split) => dataset.split(SplitSpec {
            train_fraction: split.train_fraction,
            seed: split.seed,
        })?,
        None => (dataset.clone(), dataset),
    };

    let budget = config.budget()?;
    let accountant = PrivacyAccountant::new(budget);
    let (configs, training) = match config.privacy.mode {
        Mode::Exact => (&config.models.exact, Training::Exact),
        Mode::Private => (
            &config.models.private,
            Training::Private {
                accountant: &accountant,
                budget,
                plan: config.privacy.budget_plan,
            },
        ),
    };
    let model = CreditRiskModel::train(&train_set, configs, seed, training)?;
    let ledger = accountant.ledger();
    let document = PortableModelDocument::from_credit_risk(&model, &ledger, Some(seed))?;
    let model_path = dir.join("model.dpcm.json");
    export_model(&document, &model_path)?;
    write_ledger(&dir.join("ledger.json"), &ledger)?;

    let predicted = total_expected_loss(&model.predict_losses(&eval_set)?);
    println!("mode:            {:?}", config.privacy.mode);
    println!("trained on:      {} records", train_set.len());
    println!("predicted loss:  {} over {} records", predicted, eval_set.len());
    println!("model:           {}", model_path.display());
    match config.privacy.mode {
        Mode::Exact => println!("privacy spend:   none (exact mode)"),
        Mode::Private => print!("{}", accountant.report()),
    }
    Ok(())
}

fn write_reports(dir: &Path, reports: &[RunReport]) -> CliResult {
    write_runs_csv(reports, &dir.join("runs.csv"))?;
    let summary = aggregate(reports)?;
    write_aggregate_json(&summary, &dir.join("aggregate.json"))?;
    emit_figure_data(reports, &dir.join("figures"))?;

    println!("{:>4} {:>14} {:>14} {:>14} {:>14} {:>8} {:>8}", "run", "actual", "dp actual", "NDPM", "DPM", "NDPM %", "DPM %");
    for r in reports {
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
    println!("\n{summary}");
    Ok(())
}

fn evaluate(cli: &Cli, replay: Option<&Path>) -> CliResult {
    if let Some(path) = replay {
        let config = cli.config.as_deref().map(RunConfigFile::load).transpose()?;
        let dir = out_dir(cli, config.as_ref());
        let file = std::fs::File::open(path).map_err(|e| CliError::from(Error::io(path, e)))?;
        let reports = read_replay_csv(file)?;
        write_reports(&dir, &reports)?;
        println!("outputs in {}", dir.display());
        return Ok(());
    }

    let config = require_config(cli)?;
    let dir = out_dir(cli, Some(&config));
    let dataset = load_data(&config)?;
    let experiment = ExperimentConfig {
        n_runs: config.evaluation.n_runs,
        subsample_fraction: config.evaluation.subsample_fraction,
        seed: cli.seed.unwrap_or(config.seed),
        held_out: config.evaluation.held_out,
        budget: config.budget()?,
        plan: config.privacy.budget_plan,
        report_epsilon: config.privacy.report_epsilon,
        exact: config.models.exact.clone(),
        private: config.models.private.clone(),
    };
    let reports = run_experiment(&dataset, &experiment, experiment.accountant_factory()?)?;
    write_reports(&dir, &reports)?;
    for r in &reports {
        write_ledger(&dir.join("ledgers").join(format!("run_{}.json", r.run_id)), &r.ledger)?;
    }
    let timings = timing_summary(&reports);
    let mut bytes = serde_json::to_vec_pretty(&timings).map_err(Error::from)?;
    bytes.push(b'\n');
    write_atomic(&dir.join("timing.json"), &bytes)?;
    println!("\n{timings}");
    println!("outputs in {}", dir.display());
    Ok(())
}

fn predict(model: &Path, input: &Path, output: &Path) -> CliResult {
    let document = import_model(model)?;
    standalone_predict(&document, input, output)?;
    println!("wrote predictions to {}", output.display());
    Ok(())
}

fn budget(cli: &Cli, ledger: Option<&Path>) -> CliResult {
    let config = cli.config.as_deref().map(RunConfigFile::load).transpose()?;
    let privacy = config.as_ref().map(|c| c.privacy.clone()).unwrap_or_default();
    let budget = PrivacyParams::new(privacy.epsilon, privacy.delta).map_err(|e| CliError::usage(format!("privacy: {e}")))?;
    match ledger {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::from(Error::io(path, e)))?;
            let entries: Vec<LedgerEntry> = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::from(Error::MalformedDocument {
                    path: path.display().to_string(),
                    message: e.to_string(),
                }))?;
            let accountant = PrivacyAccountant::from_ledger(budget, entries)?;
            print!("{}", accountant.report());
        }
        None => {
            let plan = privacy.budget_plan;
            plan.validate()?;
            println!("budget      ε={}  δ={}", budget.epsilon(), budget.delta());
            for (stage, share) in [
                ("preprocess", plan.preprocess),
                ("pd", plan.pd),
                ("ccf", plan.ccf),
                ("lgd/nonzero", plan.lgd / 2.0),
                ("lgd/rate", plan.lgd / 2.0),
            ] {
                println!("  {stage:<12} ε={:.6}", budget.epsilon() * share);
            }
            println!("  {:<12} ε={:.6} per evaluation run", "report", privacy.report_epsilon);
        }
    }
    Ok(())
}

fn export(model: &Path, component: Component, out: &Path) -> CliResult {
    let document = import_model(model)?;
    let extracted = match (component, &document.model) {
        (Component::Bundle, _) => document,
        (c, PortableModel::CreditRiskBundle(bundle)) => {
            let part = match c {
                Component::Pd => PortableModel::Gbt(bundle.pd_model.clone()),
                Component::Ccf => PortableModel::Forest(bundle.ccf_model.clone()),
                Component::LgdNonzero => PortableModel::Gbt(bundle.lgd_nonzero.clone()),
                Component::LgdRate => PortableModel::Forest(bundle.lgd_rate.clone()),
                Component::Bundle => unreachable!(),
            };
            PortableModelDocument::with_pipeline(part, bundle.pipeline.clone(), document.metadata.clone())?
        }
        (_, _) => return Err(CliError::usage("--component needs a credit-risk bundle document")),
    };
    export_model(&extracted, out)?;
    let kind = serde_json::to_value(extracted.model_kind()).map_err(Error::from)?;
    println!("wrote {} document to {}", kind.as_str().unwrap_or_default(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let config = RunConfigFile::from_json(br#"{"data": {"synthetic": {"n": 100}}}"#).unwrap();
        assert_eq!(config.privacy.epsilon, 8.0);
        assert_eq!(config.evaluation.n_runs, 8);
        assert_eq!(config.models.private, ModelConfigs::private_default());
        assert_eq!(config.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = RunConfigFile::from_json(br#"{"data": {"synthetic": {"n": 1}}, "privacy": {"epsilon": 1, "epsilom": 2}}"#)
            .unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("privacy"), "{}", err.message);
        assert!(RunConfigFile::from_json(br#"{"data": {"source": "a.csv"}, "extra": 1}"#).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::SchemaMismatch { column: "x".into() }), 5);
        assert_eq!(exit_code(&Error::SingleClass), 4);
        let budget = Error::BudgetExhausted {
            query_id: "q".into(),
            requested_epsilon: 1.0,
            requested_delta: 0.0,
            remaining_epsilon: 0.0,
            remaining_delta: 0.0,
        };
        assert_eq!(
            exit_code(&Error::Run {
                run_id: 2,
                source: Box::new(budget)
            }),
            3
        );
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["dpcredit", "generate", "--n", "10", "--out", "x.csv", "--seed", "3"]).unwrap();
        assert_eq!(cli.seed, Some(3));
        assert!(Cli::try_parse_from(["dpcredit", "generate", "--n", "0", "--out", "x.csv"]).is_err());
    }
}
