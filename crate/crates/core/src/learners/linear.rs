use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_binary, check_training_input, sigmoid, Predict, TrainConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::{gaussian_sigma, Mode, PrivacyAccountant};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
}

impl Predict for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        match self.link {
            Link::Identity => z,
            Link::Logit => sigmoid(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearHyper {
    pub iterations: usize,
    pub step_size: f64,
    pub l2: f64,
    /// Per-record gradient norm bound in private mode.
    pub clip_norm: f64,
    /// Exact mode stops once the gradient's max-norm falls below this.
    pub tolerance: f64,
}

impl Default for LinearHyper {
    fn default() -> Self {
        LinearHyper {
            iterations: 500,
            step_size: 0.1,
            l2: 1e-4,
            clip_norm: 1.0,
            tolerance: 1e-8,
        }
    }
}

/// Mean loss and its gradient at `params = [w_1, …, w_d, b]`: squared error `½(ŷ−y)²`
/// for [`Link::Identity`], log-loss for [`Link::Logit`], plus `½·l2·‖w‖²`.
pub fn loss_and_gradient(x: &Matrix, y: &[f64], link: Link, l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let (w, b) = params.split_at(d);
    let n = x.n_rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &target) in x.rows().zip(y) {
        let z = b[0] + w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        let residual = match link {
            Link::Identity => {
                let r = z - target;
                loss += 0.5 * r * r;
                r
            }
            Link::Logit => {
                // softplus(z) − y·z, evaluated without overflow.
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - target * z;
                sigmoid_exact(z) - target
            }
        };
        for (g, xj) in grad.iter_mut().zip(row) {
            *g += residual * xj;
        }
        grad[d] += residual;
    }
    for g in &mut grad {
        *g /= n;
    }
    loss /= n;
    for j in 0..d {
        loss += 0.5 * l2 * w[j] * w[j];
        grad[j] += l2 * w[j];
    }
    (loss, grad)
}

fn sigmoid_exact(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn train_linear(
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig<LinearHyper>,
    accountant: Option<&PrivacyAccountant>,
) -> Result<LinearModel> {
    train_glm(x, y, Link::Identity, config, accountant)
}

pub fn train_logistic(
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig<LinearHyper>,
    accountant: Option<&PrivacyAccountant>,
) -> Result<LinearModel> {
    check_training_input(x, y)?;
    check_binary(y)?;
    train_glm(x, y, Link::Logit, config, accountant)
}

fn train_glm(
    x: &Matrix,
    y: &[f64],
    link: Link,
    config: &TrainConfig<LinearHyper>,
    accountant: Option<&PrivacyAccountant>,
) -> Result<LinearModel> {
    check_training_input(x, y)?;
    let hyper = &config.hyper;
    if !(hyper.step_size > 0.0 && hyper.l2 >= 0.0 && hyper.clip_norm > 0.0) {
        return Err(Error::params("step size and clip norm must be positive, l2 non-negative"));
    }
    if config.mode == Mode::Private && x.bounds().is_none() {
        return Err(Error::params("private training needs feature bounds"));
    }
    let privacy = config.begin(accountant)?;

    // Training runs on features mapped to [0, 1] through their schema bounds, which
    // keeps one step size and one clip norm meaningful for every column.
    let d = x.n_cols();
    let (offsets, scales): (Vec<f64>, Vec<f64>) = match x.bounds() {
        Some(bounds) => bounds.iter().map(|b| (b.lower(), b.width())).unzip(),
        None => (vec![0.0; d], vec![1.0; d]),
    };
    let scaled_values: Vec<f64> = match x.bounds() {
        Some(bounds) => x
            .rows()
            .flat_map(|row| row.iter().zip(bounds).map(|(&v, b)| b.normalize(v)))
            .collect(),
        None => x.values().to_vec(),
    };
    let scaled = Matrix::new(x.n_rows(), d, scaled_values)?;
    let targets: Vec<f64> = match (privacy, link) {
        (Some(p), Link::Identity) => y.iter().map(|&v| p.label_bounds.clip(v)).collect(),
        _ => y.to_vec(),
    };

    let mut params = vec![0.0; d + 1];
    match privacy {
        None => {
            for iteration in 0..hyper.iterations {
                let (loss, grad) = loss_and_gradient(&scaled, &targets, link, hyper.l2, &params);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { iteration });
                }
                if grad.iter().all(|g| g.abs() < hyper.tolerance) {
                    break;
                }
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= hyper.step_size * g;
                }
            }
        }
        Some(privacy) => {
            let iterations = hyper.iterations.max(1);
            let per_iteration = privacy.share.split(iterations)?;
            let sigma = gaussian_sigma(hyper.clip_norm, per_iteration)?;
            let mut rng = stream(config.seed, Stream::Noise);
            // The record count is treated as public.
            let n = x.n_rows() as f64;
            let mut grad = vec![0.0; d + 1];
            for iteration in 0..iterations {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (row, &target) in scaled.rows().zip(&targets) {
                    let z = params[d] + params[..d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
                    let residual = match link {
                        Link::Identity => z - target,
                        Link::Logit => sigmoid_exact(z) - target,
                    };
                    let norm = residual.abs() * (row.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt();
                    let factor = if norm > hyper.clip_norm { hyper.clip_norm / norm } else { 1.0 };
                    for (g, xj) in grad.iter_mut().zip(row) {
                        *g += factor * residual * xj;
                    }
                    grad[d] += factor * residual;
                }
                for j in 0..=d {
                    let noise: f64 = rng.sample(StandardNormal);
                    let mut g = (grad[j] + sigma * noise) / n;
                    if j < d {
                        g += hyper.l2 * params[j];
                    }
                    params[j] -= hyper.step_size * g;
                }
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFiniteLoss { iteration });
                }
            }
        }
    }

    let weights: Vec<f64> = params[..d].iter().zip(&scales).map(|(w, s)| w / s).collect();
    let intercept = params[d] - weights.iter().zip(&offsets).map(|(w, o)| w * o).sum::<f64>();
    Ok(LinearModel { weights, intercept, link })
}
