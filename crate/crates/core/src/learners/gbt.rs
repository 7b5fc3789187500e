use serde::{Deserialize, Serialize};

use super::tree::{grow_greedy, random_structure, route, GreedyParams};
use super::{check_binary, check_training_input, sigmoid, Predict, SplitRule, TrainConfig, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::{dp_count, dp_sum, ClippingBounds, Mode, PrivacyAccountant};
use crate::rng::{child_seed, stream, Stream};

/// Base rates are clamped into `[BASE_RATE_FLOOR, 1 − BASE_RATE_FLOOR]` before the logit.
const BASE_RATE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtHyper {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_child_weight: f64,
    /// Ignored in private mode, which always uses random splits.
    pub splits: SplitRule,
    /// Optional symmetric clamp on leaf values.
    pub max_leaf: Option<f64>,
    /// Share of the private budget spent on the base rate.
    pub base_fraction: f64,
}

impl Default for GbtHyper {
    fn default() -> Self {
        GbtHyper {
            n_rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            splits: SplitRule::Greedy,
            max_leaf: None,
            base_fraction: 0.1,
        }
    }
}

/// `p = sigmoid(base_score + learning_rate · Σ tree(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl GbtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// The model after its first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> GbtModel {
        GbtModel {
            trees: self.trees[..rounds.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.trees.iter().map(Tree::n_nodes).sum()
    }
}

impl Predict for GbtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(BASE_RATE_FLOOR, 1.0 - BASE_RATE_FLOOR);
    (p / (1.0 - p)).ln()
}

/// Mean log-loss of `model` on `(x, y)`.
pub fn log_loss(model: &GbtModel, x: &Matrix, y: &[f64]) -> f64 {
    let total: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &t)| {
            let z = model.margin(row);
            z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z
        })
        .sum();
    total / y.len() as f64
}

/// Newton boosting on log-loss with leaf values `−G/(H+λ)`.
///
/// In private mode `base_fraction` of the share buys a noisy base rate (sum and count)
/// and the rest is split evenly across rounds. Each round grows a random-split tree and
/// releases per-leaf `Σg` (g = p − y ∈ [−1, 1]) and `Σh` (h = p(1−p) ∈ [0, ¼]) through
/// the Laplace mechanism, half the round budget each.
pub fn train_gbt(
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig<GbtHyper>,
    accountant: Option<&PrivacyAccountant>,
) -> Result<GbtModel> {
    check_training_input(x, y)?;
    check_binary(y)?;
    let hyper = &config.hyper;
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate <= 1.0) {
        return Err(Error::params(format!("learning rate must lie in (0, 1], got {}", hyper.learning_rate)));
    }
    if !(hyper.lambda >= 0.0 && hyper.base_fraction > 0.0 && hyper.base_fraction < 1.0) {
        return Err(Error::params("lambda must be non-negative and base_fraction in (0, 1)"));
    }
    let n = x.n_rows();
    let d = x.n_cols();
    let splits = if config.mode == Mode::Private { SplitRule::Random } else { hyper.splits };
    let bounds = match splits {
        SplitRule::Random => Some(
            x.bounds()
                .ok_or_else(|| Error::params("random splits need feature bounds"))?
                .to_vec(),
        ),
        SplitRule::Greedy => None,
    };
    let privacy = config.begin(accountant)?;
    let mut noise = stream(config.seed, Stream::Noise);
    let clamp_leaf = |v: f64| hyper.max_leaf.map_or(v, |m| v.clamp(-m, m));

    let base_rate = match privacy {
        None => y.iter().sum::<f64>() / n as f64,
        Some(p) => {
            let half = p.share.epsilon() * hyper.base_fraction / 2.0;
            let sum = dp_sum(y, ClippingBounds::unit(), half, &mut noise)?;
            let count = dp_count(n, half, &mut noise)?;
            sum / count.max(1.0)
        }
    };
    let round_epsilon = privacy
        .map(|p| p.share.epsilon() * (1.0 - hyper.base_fraction) / hyper.n_rounds.max(1) as f64);
    let mut model = GbtModel {
        base_score: logit(base_rate),
        learning_rate: hyper.learning_rate,
        trees: Vec::with_capacity(hyper.n_rounds),
        n_features: d,
    };

    let all_rows: Vec<usize> = (0..n).collect();
    let mut margins = vec![model.base_score; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let g_bounds = ClippingBounds::new(-1.0, 1.0)?;
    let h_bounds = ClippingBounds::new(0.0, 0.25)?;
    for round in 0..hyper.n_rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - y[i];
            h[i] = p * (1.0 - p);
        }
        let seed = child_seed(config.seed, round as u64);
        let tree = match splits {
            SplitRule::Greedy => {
                let params = GreedyParams {
                    max_depth: hyper.max_depth,
                    min_child_weight: hyper.min_child_weight,
                    lambda: hyper.lambda,
                    features_per_node: None,
                };
                let mut rng = stream(seed, Stream::Features);
                grow_greedy(x, &g, &h, all_rows.clone(), &params, &mut rng, &|gs, hs| {
                    clamp_leaf(-gs / (hs + hyper.lambda))
                })
            }
            SplitRule::Random => {
                let bounds = bounds.as_deref().expect("bounds checked above");
                let mut tree = random_structure(bounds, hyper.max_depth, &mut stream(seed, Stream::Structure));
                let buckets = route(&tree, x, &all_rows);
                for leaf in tree.leaf_indices() {
                    let rows = &buckets[leaf];
                    let (gs, hs) = match round_epsilon {
                        None => (rows.iter().map(|&i| g[i]).sum(), rows.iter().map(|&i| h[i]).sum()),
                        Some(eps) => {
                            let gl: Vec<f64> = rows.iter().map(|&i| g[i]).collect();
                            let hl: Vec<f64> = rows.iter().map(|&i| h[i]).collect();
                            let gs = dp_sum(&gl, g_bounds, eps / 2.0, &mut noise)?;
                            let hs = dp_sum(&hl, h_bounds, eps / 2.0, &mut noise)?;
                            (gs, hs.max(0.0))
                        }
                    };
                    tree.set_leaf_value(leaf, clamp_leaf(-gs / (hs + hyper.lambda)));
                }
                tree
            }
        };
        for (i, m) in margins.iter_mut().enumerate() {
            *m += hyper.learning_rate * tree.predict_row(x.row(i));
        }
        model.trees.push(tree);
    }
    Ok(model)
}
