//! Fitted, replayable preprocessing.
//!
//! A [`Pipeline`] is fitted once (exactly, or privately against an accountant) and then
//! applied any number of times. Applying never adds noise and never touches an
//! accountant: in private mode the fitted constants are themselves DP releases.
//!
//! Fit order: categorical binning, column removal, median imputation over every
//! numeric column, correlation filtering, one-hot encoding.

mod frame;
mod steps;

pub use frame::{Column, ColumnData, ColumnKind, Frame, InputColumn};
pub use steps::{
    fit_binning, fit_correlation_filter, fit_drop_columns, fit_median_impute, fit_one_hot, FitMode,
    OneHotColumn, TransformStep, DEFAULT_DROP_COLUMNS, HOME_OWNERSHIP_BINS, PURPOSE_BINS, STATE_REGIONS,
};

use serde::{Deserialize, Serialize};

use crate::credit_risk::{actual_ead, ccf, recovery_rate};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::{ClippingBounds, Mode, PrivacyAccountant};
use crate::rng::{stream, Stream};

pub const BINNED_COLUMNS: [&str; 3] = ["state", "home_ownership", "purpose"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub drop_columns: Vec<String>,
    /// `None` disables the correlation filter.
    pub correlation_threshold: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            drop_columns: DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            correlation_threshold: Some(0.85),
        }
    }
}

/// How [`Pipeline::fit`] obtains statistics.
#[derive(Clone, Copy)]
pub enum PipelineFit<'a> {
    Exact,
    Private {
        accountant: &'a PrivacyAccountant,
        epsilon: f64,
        seed: u64,
    },
}

/// Supervised targets derived from outcome fields, aligned with matrix rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Targets {
    /// 1.0 for CHARGED_OFF or DEFAULT, else 0.0.
    pub default_label: Vec<f64>,
    /// Defined for defaulted records only.
    pub ccf: Vec<Option<f64>>,
    /// Defined for defaulted records only.
    pub recovery_rate: Vec<Option<f64>>,
}

impl Targets {
    pub fn from_dataset(dataset: &Dataset) -> Targets {
        let mut targets = Targets::default();
        for r in dataset.records() {
            let defaulted = r.defaulted();
            targets.default_label.push(if defaulted { 1.0 } else { 0.0 });
            targets
                .ccf
                .push(defaulted.then(|| ccf(r.total_funded_amount, r.total_recovered_principal).ok()).flatten());
            targets
                .recovery_rate
                .push(defaulted.then(|| recovery_rate(r.recoveries, actual_ead(r))));
        }
        targets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub matrix: Matrix,
    pub targets: Targets,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Indices of defaulted rows.
    pub fn defaulted_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.targets.default_label[i] == 1.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    config: PipelineConfig,
    mode: Mode,
    inputs: Vec<InputColumn>,
    steps: Vec<TransformStep>,
    fitted: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Pipeline {
        Pipeline {
            config,
            mode: Mode::Exact,
            inputs: Frame::loan_schema(),
            steps: Vec::new(),
            fitted: false,
        }
    }

    pub fn fit(&mut self, dataset: &Dataset, how: PipelineFit<'_>) -> Result<()> {
        self.fit_frame(&Frame::from_dataset(dataset), how)
    }

    /// Fits every step on `frame`. In private mode ε is split evenly between
    /// imputation and correlation filtering (all of it goes to imputation when the
    /// filter is disabled or cannot run).
    pub fn fit_frame(&mut self, frame: &Frame, how: PipelineFit<'_>) -> Result<()> {
        self.inputs = frame
            .columns()
            .iter()
            .map(|c| InputColumn {
                name: c.name.clone(),
                kind: if c.is_numeric() { ColumnKind::Numeric } else { ColumnKind::Categorical },
                bounds: c.bounds,
            })
            .collect();
        let mut work = frame.clone();
        let mut steps = Vec::new();

        for column in BINNED_COLUMNS {
            if work.column(column).is_some_and(|c| !c.is_numeric()) {
                let step = fit_binning(column)?;
                step.apply(&mut work)?;
                steps.push(step);
            }
        }

        for name in &self.config.drop_columns {
            if work.column(name).is_none() {
                log::warn!("drop list names `{name}`, which is not in the data");
            }
        }
        let drop = fit_drop_columns(&self.config.drop_columns);
        drop.apply(&mut work)?;
        steps.push(drop);

        let numeric: Vec<String> = work.numeric_columns().map(|c| c.name.clone()).collect();
        let correlate = self.config.correlation_threshold.filter(|_| numeric.len() >= 2);
        let mut rng = match how {
            PipelineFit::Private { seed, .. } => Some(stream(seed, Stream::Noise)),
            PipelineFit::Exact => None,
        };
        let impute_share = if correlate.is_some() { 0.5 } else { 1.0 };

        let impute = match (how, rng.as_mut()) {
            (PipelineFit::Private { accountant, epsilon, .. }, Some(rng)) => fit_median_impute(
                &work,
                &numeric,
                FitMode::Private {
                    accountant,
                    epsilon: epsilon * impute_share,
                    rng,
                    query_id: "preprocess/median_impute".into(),
                },
            )?,
            _ => fit_median_impute(&work, &numeric, FitMode::Exact)?,
        };
        impute.apply(&mut work)?;
        steps.push(impute);

        if let Some(threshold) = correlate {
            let filter = match (how, rng.as_mut()) {
                (PipelineFit::Private { accountant, epsilon, .. }, Some(rng)) => fit_correlation_filter(
                    &work,
                    threshold,
                    FitMode::Private {
                        accountant,
                        epsilon: epsilon * 0.5,
                        rng,
                        query_id: "preprocess/correlation_filter".into(),
                    },
                )?,
                _ => fit_correlation_filter(&work, threshold, FitMode::Exact)?,
            };
            filter.apply(&mut work)?;
            steps.push(filter);
        }

        let mut one_hot = Vec::new();
        for column in work.columns().iter().filter(|c| !c.is_numeric()) {
            let vocabulary = steps.iter().find_map(|s| match s {
                TransformStep::BinCategorical { column: c, vocabulary, .. } if *c == column.name => {
                    Some(vocabulary.clone())
                }
                _ => None,
            });
            let vocabulary = vocabulary.ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "categorical column `{}` has no fixed vocabulary; add it to the drop list",
                    column.name
                ))
            })?;
            one_hot.push((column.name.clone(), vocabulary));
        }
        if !one_hot.is_empty() {
            steps.push(fit_one_hot(one_hot));
        }

        self.steps = steps;
        self.mode = match how {
            PipelineFit::Exact => Mode::Exact,
            PipelineFit::Private { .. } => Mode::Private,
        };
        self.fitted = true;
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn steps(&self) -> &[TransformStep] {
        &self.steps
    }

    pub fn inputs(&self) -> &[InputColumn] {
        &self.inputs
    }

    /// Input columns a frame must carry for [`Pipeline::transform`].
    pub fn required_columns(&self) -> Vec<String> {
        let removed: Vec<&str> = self.steps.iter().flat_map(TransformStep::removed_columns).collect();
        self.inputs
            .iter()
            .map(|c| c.name.clone())
            .filter(|n| !removed.contains(&n.as_str()))
            .collect()
    }

    /// Output feature names, derived without data.
    pub fn output_columns(&self) -> Result<Vec<String>> {
        let columns = self
            .inputs
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => Column::numeric(&c.name, Vec::new(), c.bounds),
                ColumnKind::Categorical => Column::categorical(&c.name, Vec::new()),
            })
            .collect();
        Ok(self.transform(&Frame::new(columns)?)?.0)
    }

    /// Features plus targets for every record in `dataset`.
    pub fn apply(&self, dataset: &Dataset) -> Result<FeatureMatrix> {
        let (column_names, matrix) = self.transform(&Frame::from_dataset(dataset))?;
        Ok(FeatureMatrix {
            column_names,
            matrix,
            targets: Targets::from_dataset(dataset),
        })
    }

    /// Applies the fitted steps to a raw frame and returns the output column names and
    /// matrix. Columns outside the fitted input schema are ignored.
    pub fn transform(&self, frame: &Frame) -> Result<(Vec<String>, Matrix)> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let required = self.required_columns();
        let mut columns = Vec::with_capacity(required.len());
        for name in &required {
            let column = frame
                .column(name)
                .ok_or_else(|| Error::SchemaMismatch { column: name.clone() })?;
            columns.push(column.clone());
        }
        let mut work = Frame::new(columns)?;
        for step in &self.steps {
            match step {
                TransformStep::MedianImpute { values } => {
                    let present = values
                        .iter()
                        .filter(|(name, _)| work.column(name).is_some())
                        .map(|(name, v)| (name.clone(), *v))
                        .collect();
                    TransformStep::MedianImpute { values: present }.apply(&mut work)?;
                }
                step => step.apply(&mut work)?,
            }
        }

        let n_rows = frame.n_rows();
        let names: Vec<String> = work.column_names().iter().map(|s| s.to_string()).collect();
        let mut values = vec![0.0; n_rows * names.len()];
        let mut bounds = Vec::with_capacity(names.len());
        for (j, column) in work.columns().iter().enumerate() {
            let ColumnData::Numeric(cells) = &column.data else {
                return Err(Error::params(format!("column `{}` is still categorical", column.name)));
            };
            for (i, cell) in cells.iter().enumerate() {
                values[i * names.len() + j] = cell.ok_or_else(|| Error::MissingValues(column.name.clone()))?;
            }
            bounds.push(column.bounds);
        }
        let mut matrix = Matrix::new(n_rows, names.len(), values)?;
        if let Some(bounds) = bounds.into_iter().collect::<Option<Vec<ClippingBounds>>>() {
            matrix = matrix.with_bounds(bounds)?;
        }
        Ok((names, matrix))
    }
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline::new(PipelineConfig::default())
    }
}
