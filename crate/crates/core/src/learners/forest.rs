use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_greedy, random_structure, route, GreedyParams};
use super::{check_training_input, Predict, SplitRule, TrainConfig, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::{dp_count, dp_sum, Mode, PrivacyAccountant};
use crate::rng::{child_seed, stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum bootstrap weight per child of a greedy split.
    pub min_child_weight: f64,
    /// Features examined per greedy node; `None` means round(√d).
    pub features_per_node: Option<usize>,
    pub bootstrap: bool,
    /// Ignored in private mode, which always uses random splits.
    pub splits: SplitRule,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 100,
            max_depth: 6,
            min_child_weight: 1.0,
            features_per_node: None,
            bootstrap: true,
            splits: SplitRule::Greedy,
        }
    }
}

/// Mean-aggregated regression forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl ForestModel {
    pub fn new(trees: Vec<Tree>, n_features: usize) -> Result<ForestModel> {
        if trees.is_empty() {
            return Err(Error::params("a forest needs at least one tree"));
        }
        Ok(ForestModel { trees, n_features })
    }

    pub fn n_nodes(&self) -> usize {
        self.trees.iter().map(Tree::n_nodes).sum()
    }
}

impl Predict for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Exact mode: bootstrap per tree, greedy variance-reduction splits over √d features,
/// mean leaves. Random-split exact mode computes `Σy / max(1, n)` per leaf, the noise-free
/// analogue of the private estimator.
///
/// Private mode: random splits, no bootstrap, and per tree `ε/T` split evenly between a
/// clipped label sum and a record count per leaf. Each record reaches exactly one leaf of
/// a tree, so leaves of the same tree compose in parallel.
pub fn train_random_forest(
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig<ForestHyper>,
    accountant: Option<&PrivacyAccountant>,
) -> Result<ForestModel> {
    check_training_input(x, y)?;
    let hyper = &config.hyper;
    if hyper.n_trees == 0 {
        return Err(Error::params("a forest needs at least one tree"));
    }
    let d = x.n_cols();
    let n = x.n_rows();
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
    let tree_epsilon = privacy.map(|p| p.share.epsilon() / hyper.n_trees as f64);
    let features_per_node = hyper
        .features_per_node
        .unwrap_or_else(|| ((d as f64).sqrt().round() as usize).max(1));

    let trees: Vec<Tree> = (0..hyper.n_trees)
        .into_par_iter()
        .map(|t| -> Result<Tree> {
            let seed = child_seed(config.seed, t as u64);
            match (splits, privacy) {
                (SplitRule::Greedy, _) => {
                    let mut weights = vec![0.0; n];
                    if hyper.bootstrap {
                        let mut rng = stream(seed, Stream::Bootstrap);
                        for _ in 0..n {
                            weights[rng.random_range(0..n)] += 1.0;
                        }
                    } else {
                        weights.iter_mut().for_each(|w| *w = 1.0);
                    }
                    let g: Vec<f64> = weights.iter().zip(y).map(|(w, y)| w * y).collect();
                    let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
                    let params = GreedyParams {
                        max_depth: hyper.max_depth,
                        min_child_weight: hyper.min_child_weight,
                        lambda: 0.0,
                        features_per_node: Some(features_per_node),
                    };
                    let mut rng = stream(seed, Stream::Features);
                    Ok(grow_greedy(x, &g, &weights, rows, &params, &mut rng, &|g, h| {
                        if h > 0.0 {
                            g / h
                        } else {
                            0.0
                        }
                    }))
                }
                (SplitRule::Random, None) => {
                    let bounds = bounds.as_deref().expect("bounds checked above");
                    let mut tree = random_structure(bounds, hyper.max_depth, &mut stream(seed, Stream::Structure));
                    let buckets = route(&tree, x, &(0..n).collect::<Vec<_>>());
                    for leaf in tree.leaf_indices() {
                        let rows = &buckets[leaf];
                        let sum: f64 = rows.iter().map(|&i| y[i]).sum();
                        tree.set_leaf_value(leaf, sum / (rows.len() as f64).max(1.0));
                    }
                    Ok(tree)
                }
                (SplitRule::Random, Some(privacy)) => {
                    let bounds = bounds.as_deref().expect("bounds checked above");
                    let mut tree = random_structure(bounds, hyper.max_depth, &mut stream(seed, Stream::Structure));
                    let buckets = route(&tree, x, &(0..n).collect::<Vec<_>>());
                    let half = tree_epsilon.expect("private") / 2.0;
                    let mut rng = stream(seed, Stream::Noise);
                    for leaf in tree.leaf_indices() {
                        let labels: Vec<f64> = buckets[leaf].iter().map(|&i| y[i]).collect();
                        let sum = dp_sum(&labels, privacy.label_bounds, half, &mut rng)?;
                        let count = dp_count(labels.len(), half, &mut rng)?;
                        tree.set_leaf_value(leaf, privacy.label_bounds.clip(sum / count.max(1.0)));
                    }
                    Ok(tree)
                }
            }
        })
        .collect::<Result<_>>()?;
    ForestModel::new(trees, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::PrivacyConfig;
    use crate::privacy::{ClippingBounds, PrivacyParams};
    use crate::rng::seeded;

    fn toy(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = rows.iter().map(|r| if r[0] > 0.5 { 0.8 } else { 0.2 * r[1] }).collect();
        let x = Matrix::from_rows(&rows)
            .unwrap()
            .with_bounds(vec![ClippingBounds::unit(); 2])
            .unwrap();
        (x, y)
    }

    #[test]
    fn constant_target() {
        let (x, _) = toy(200, 1);
        let y = vec![3.25; 200];
        let m = train_random_forest(&x, &y, &TrainConfig::exact(1), None).unwrap();
        assert!(m.predict(&x).unwrap().iter().all(|p| (p - 3.25).abs() < 1e-12));
    }

    #[test]
    fn stump_predicts_global_mean() {
        let (x, y) = toy(100, 2);
        let hyper = ForestHyper {
            n_trees: 1,
            max_depth: 0,
            bootstrap: false,
            ..ForestHyper::default()
        };
        let m = train_random_forest(&x, &y, &TrainConfig::exact(1).with_hyper(hyper), None).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.predict_row(&[0.3, 0.3]) - mean).abs() < 1e-12);
    }

    #[test]
    fn greedy_forest_learns_step() {
        let (x, y) = toy(500, 3);
        let m = train_random_forest(&x, &y, &TrainConfig::exact(4), None).unwrap();
        assert!((m.predict_row(&[0.9, 0.5]) - 0.8).abs() < 0.05);
        assert!(m.predict_row(&[0.1, 0.5]) < 0.2);
        let again = train_random_forest(&x, &y, &TrainConfig::exact(4), None).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn private_leaves_match_exact_random_leaves() {
        let (x, y) = toy(1_000, 5);
        let hyper = ForestHyper {
            n_trees: 3,
            max_depth: 2,
            bootstrap: false,
            splits: SplitRule::Random,
            ..ForestHyper::default()
        };
        let exact = train_random_forest(&x, &y, &TrainConfig::exact(9).with_hyper(hyper.clone()), None).unwrap();
        let acc = PrivacyAccountant::new(PrivacyParams::pure(1e9).unwrap());
        let config = TrainConfig {
            seed: 9,
            mode: Mode::Private,
            privacy: Some(PrivacyConfig {
                share: PrivacyParams::pure(1e9).unwrap(),
                label_bounds: ClippingBounds::unit(),
                query_id: "rf".into(),
            }),
            hyper,
        };
        let private = train_random_forest(&x, &y, &config, Some(&acc)).unwrap();
        for (a, b) in exact.trees.iter().zip(&private.trees) {
            assert!(a.structure_matches(b));
            for leaf in a.leaf_indices() {
                let (va, vb) = (a.nodes()[leaf].clone(), b.nodes()[leaf].clone());
                let (crate::learners::Node::Leaf { value: va }, crate::learners::Node::Leaf { value: vb }) = (va, vb)
                else {
                    panic!()
                };
                assert!((va - vb).abs() < 1e-3);
            }
        }
        assert_eq!(acc.ledger_len(), 1);
    }

    #[test]
    fn private_needs_bounds() {
        let x = Matrix::zeros(4, 1);
        let acc = PrivacyAccountant::new(PrivacyParams::pure(1.0).unwrap());
        let config = TrainConfig::<ForestHyper>::private(
            1,
            PrivacyConfig {
                share: PrivacyParams::pure(1.0).unwrap(),
                label_bounds: ClippingBounds::unit(),
                query_id: "rf".into(),
            },
        );
        assert!(train_random_forest(&x, &[0.0; 4], &config, Some(&acc)).is_err());
    }
}
