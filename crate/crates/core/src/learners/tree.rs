use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::privacy::ClippingBounds;
use crate::rng::DpRng;

/// How split points are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SplitRule {
    /// Best gain over midpoints between observed values.
    #[default]
    Greedy,
    /// A uniformly drawn feature and a threshold uniform within its bounds; the shape
    /// is fixed before any data is seen.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A binary tree stored as a flat node list. The root is node 0 and every child has a
/// larger index than its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Checks the arena invariants against `n_features`.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize) -> Result<Tree> {
        if nodes.is_empty() {
            return Err(Error::params("a tree needs at least one node"));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features {
                        return Err(Error::params(format!(
                            "node {i} splits on feature {feature} of {n_features}"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::params(format!("node {i} has a non-finite threshold")));
                    }
                    for child in [left, right] {
                        if child <= i || child >= nodes.len() {
                            return Err(Error::params(format!("node {i} has invalid child {child}")));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::params(format!("leaf {i} has a non-finite value")));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::params("every non-root node needs exactly one parent"));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf `row` lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaf_indices(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Leaf { .. }))
            .collect()
    }

    pub(crate) fn set_leaf_value(&mut self, index: usize, value: f64) {
        if let Node::Leaf { value: v } = &mut self.nodes[index] {
            *v = value;
        }
    }

    /// Identical splits and shape; leaf values may differ.
    pub fn structure_matches(&self, other: &Tree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|pair| match pair {
                (
                    Node::Split {
                        feature: f1,
                        threshold: t1,
                        left: l1,
                        right: r1,
                    },
                    Node::Split {
                        feature: f2,
                        threshold: t2,
                        left: l2,
                        right: r2,
                    },
                ) => f1 == f2 && t1.to_bits() == t2.to_bits() && l1 == l2 && r1 == r2,
                (Node::Leaf { .. }, Node::Leaf { .. }) => true,
                _ => false,
            })
    }
}

/// A complete tree of `depth` levels whose splits depend only on `bounds` and `rng`.
/// Leaves start at zero.
pub(crate) fn random_structure(bounds: &[ClippingBounds], depth: usize, rng: &mut DpRng) -> Tree {
    fn build(nodes: &mut Vec<Node>, bounds: &[ClippingBounds], depth: usize, rng: &mut DpRng) -> usize {
        let index = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        if depth > 0 && !bounds.is_empty() {
            let feature = rng.random_range(0..bounds.len());
            let u: f64 = rng.sample(Open01);
            let threshold = bounds[feature].lower() + u * bounds[feature].width();
            let left = build(nodes, bounds, depth - 1, rng);
            let right = build(nodes, bounds, depth - 1, rng);
            nodes[index] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
        }
        index
    }
    let mut nodes = Vec::with_capacity((1 << depth.min(20)) * 2);
    build(&mut nodes, bounds, depth, rng);
    Tree { nodes }
}

/// Assigns each of `rows` to its leaf, returning the row lists keyed by node index.
pub(crate) fn route(tree: &Tree, x: &Matrix, rows: &[usize]) -> Vec<Vec<usize>> {
    let mut buckets = vec![Vec::new(); tree.n_nodes()];
    for &i in rows {
        buckets[tree.leaf_index(x.row(i))].push(i);
    }
    buckets
}

pub(crate) struct GreedyParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Features examined per node; `None` means all.
    pub features_per_node: Option<usize>,
}

/// Grows a tree on per-row first- and second-order statistics `(g, h)`, maximising
/// `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)`. Leaves get `leaf(G, H)`.
pub(crate) fn grow_greedy(
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    rows: Vec<usize>,
    params: &GreedyParams,
    rng: &mut DpRng,
    leaf: &dyn Fn(f64, f64) -> f64,
) -> Tree {
    let mut nodes = Vec::new();
    grow(&mut nodes, x, g, h, rows, 0, params, rng, leaf);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow(
    nodes: &mut Vec<Node>,
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GreedyParams,
    rng: &mut DpRng,
    leaf: &dyn Fn(f64, f64) -> f64,
) -> usize {
    let g_sum: f64 = rows.iter().map(|&i| g[i]).sum();
    let h_sum: f64 = rows.iter().map(|&i| h[i]).sum();
    let index = nodes.len();
    nodes.push(Node::Leaf {
        value: leaf(g_sum, h_sum),
    });
    if depth >= params.max_depth || rows.len() < 2 {
        return index;
    }
    let Some((feature, threshold)) = best_split(x, g, h, &rows, g_sum, h_sum, params, rng) else {
        return index;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| x.get(i, feature) <= threshold);
    let left = grow(nodes, x, g, h, left_rows, depth + 1, params, rng, leaf);
    let right = grow(nodes, x, g, h, right_rows, depth + 1, params, rng, leaf);
    nodes[index] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    index
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    g_sum: f64,
    h_sum: f64,
    params: &GreedyParams,
    rng: &mut DpRng,
) -> Option<(usize, f64)> {
    let d = x.n_cols();
    let features: Vec<usize> = match params.features_per_node {
        Some(k) if k < d => {
            let mut picked = rand::seq::index::sample(rng, d, k.max(1)).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..d).collect(),
    };
    let lambda = params.lambda;
    let parent = g_sum * g_sum / (h_sum + lambda);
    let min_gain = 1e-10 * (parent.abs() + 1.0);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut column: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
    for feature in features {
        column.clear();
        column.extend(rows.iter().map(|&i| (x.get(i, feature), g[i], h[i])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..column.len() - 1 {
            gl += column[k].1;
            hl += column[k].2;
            let (a, b) = (column[k].0, column[k + 1].0);
            if a == b {
                continue;
            }
            let (gr, hr) = (g_sum - gl, h_sum - hl);
            if hl < params.min_child_weight || hr < params.min_child_weight {
                continue;
            }
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if gain > min_gain && best.is_none_or(|(best_gain, _, _)| gain > best_gain) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some((gain, feature, threshold));
            }
        }
    }
    best.map(|(_, feature, threshold)| (feature, threshold))
}
