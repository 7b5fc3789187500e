//! Supervised learners trainable exactly or under differential privacy.
//!
//! | model | exact | private |
//! |---|---|---|
//! | [`LinearModel`] | full-batch gradient descent | clipped per-record gradients + Gaussian noise |
//! | [`ForestModel`] | bootstrap, greedy splits, √d features | random splits, noisy leaf sums and counts |
//! | [`GbtModel`] | Newton boosting, greedy splits | random splits, noisy leaf gradient sums |
//!
//! A private trainer debits its whole share from the accountant once, before touching
//! the data. Prediction never touches an accountant.

mod forest;
mod gbt;
mod linear;
mod tree;

pub use forest::{train_random_forest, ForestHyper, ForestModel};
pub use gbt::{log_loss, train_gbt, GbtHyper, GbtModel};
pub use linear::{loss_and_gradient, train_linear, train_logistic, LinearHyper, LinearModel, Link};
pub use tree::{Node, SplitRule, Tree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::{ClippingBounds, Mode, PrivacyAccountant, PrivacyParams};

/// Smallest distance a predicted probability keeps from 0 and 1.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub(crate) fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
}

/// Per-model privacy settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    /// The share of the run budget this model may spend.
    pub share: PrivacyParams,
    /// Labels are clipped into these bounds before any private aggregate.
    pub label_bounds: ClippingBounds,
    /// Ledger entry name.
    pub query_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<H> {
    pub seed: u64,
    pub mode: Mode,
    pub privacy: Option<PrivacyConfig>,
    pub hyper: H,
}

impl<H: Default> TrainConfig<H> {
    pub fn exact(seed: u64) -> Self {
        TrainConfig {
            seed,
            mode: Mode::Exact,
            privacy: None,
            hyper: H::default(),
        }
    }

    pub fn private(seed: u64, privacy: PrivacyConfig) -> Self {
        TrainConfig {
            seed,
            mode: Mode::Private,
            privacy: Some(privacy),
            hyper: H::default(),
        }
    }
}

impl<H> TrainConfig<H> {
    pub fn with_hyper(mut self, hyper: H) -> Self {
        self.hyper = hyper;
        self
    }

    /// Validates the mode/privacy pairing and, in private mode, debits the share.
    pub(crate) fn begin<'a>(
        &'a self,
        accountant: Option<&PrivacyAccountant>,
    ) -> Result<Option<&'a PrivacyConfig>> {
        match self.mode {
            Mode::Exact => Ok(None),
            Mode::Private => {
                let privacy = self
                    .privacy
                    .as_ref()
                    .ok_or_else(|| Error::params("private training needs privacy parameters"))?;
                let accountant =
                    accountant.ok_or_else(|| Error::params("private training needs an accountant"))?;
                accountant.consume(privacy.query_id.clone(), privacy.share)?;
                Ok(Some(privacy))
            }
        }
    }
}

/// Batch prediction with a width check.
pub trait Predict {
    /// Feature width the model was trained on.
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                actual: x.n_cols(),
            });
        }
        Ok(x.rows().map(|row| self.predict_row(row)).collect())
    }
}

pub(crate) fn check_training_input(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput("training matrix has no rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::params(format!("{} targets for {} rows", y.len(), x.n_rows())));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::params(format!("non-finite target {bad}")));
    }
    Ok(())
}

pub(crate) fn check_binary(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::params(format!("labels must be 0 or 1, got {bad}")));
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}
