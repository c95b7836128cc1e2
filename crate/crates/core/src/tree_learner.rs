//! Extremely randomized regression trees grown best-first.
//!
//! Trees are only used as partition generators: the leaf rules they export
//! become a [`SoftTreeMap`](crate::feature_maps::SoftTreeMap), and the leaf
//! values are replaced by a Gaussian posterior downstream.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::feature_maps::{
    AnyMap, Condition, ConcatenatedMap, Direction, LeafRule, SoftTreeMap, TreeMode, VariableRole,
};
use crate::rng::{derive_seed, StreamRng};

/// `ceil(√n · ln n)`, floored at 2.
pub fn default_max_leaf_nodes(n: usize) -> usize {
    let n = n as f64;
    let v = libm::ceil(libm::sqrt(n) * libm::log(n));
    if v.is_finite() && v >= 2.0 {
        v as usize
    } else {
        2
    }
}

/// How split proposals are drawn at each frontier leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCandidates {
    /// `k` random (feature, threshold) pairs, best gain kept.
    Random(usize),
    /// One random threshold for every non-constant feature, best gain kept.
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_leaf_nodes: usize,
    pub candidates: SplitCandidates,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_leaf_nodes: 2,
            candidates: SplitCandidates::Random(1),
        }
    }
}

impl TreeConfig {
    /// Leaf budget `ceil(√n · ln n)` for `n` training rows.
    pub fn for_sample_size(n: usize) -> Self {
        Self {
            max_leaf_nodes: default_max_leaf_nodes(n),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// A fitted regression tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    input_dim: usize,
    nodes: Vec<Node>,
}

impl TreeModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn leaf_node(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[id]
        {
            id = if x[feature] <= threshold { left } else { right };
        }
        id
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, x.len())?;
        match self.nodes[self.leaf_node(x)] {
            Node::Leaf { value, .. } => Ok(value),
            Node::Split { .. } => unreachable!("descent always ends at a leaf"),
        }
    }

    /// One rule per leaf, depth-first with the `≤` branch first.
    pub fn leaf_rules(&self) -> Vec<LeafRule> {
        let mut rules = Vec::with_capacity(self.leaf_count());
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { .. } => rules.push(LeafRule { conditions: path }),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let mut right_path = path.clone();
                    right_path.push(Condition {
                        feature,
                        threshold,
                        direction: Direction::Greater,
                    });
                    let mut left_path = path;
                    left_path.push(Condition {
                        feature,
                        threshold,
                        direction: Direction::LessEq,
                    });
                    stack.push((right, right_path));
                    stack.push((left, left_path));
                }
            }
        }
        rules
    }

    /// The tree as a one-hot leaf-membership map (hard mode).
    pub fn feature_map(&self, roles: Vec<VariableRole>, c_continuous: f64, c_discrete: f64) -> Result<SoftTreeMap> {
        SoftTreeMap::with_config(
            self.input_dim,
            roles,
            self.leaf_rules(),
            c_continuous,
            c_discrete,
            TreeMode::Hard,
        )
    }
}

pub fn extract_leaf_rules(tree: &TreeModel) -> Vec<LeafRule> {
    tree.leaf_rules()
}

struct Proposal {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct FrontierLeaf {
    node: usize,
    rows: Vec<usize>,
    proposal: Option<Proposal>,
}

/// Reduction in squared error from splitting `rows` at `(feature, threshold)`.
fn split_gain(x: &DMatrix<f64>, y: &[f64], rows: &[usize], feature: usize, threshold: f64) -> f64 {
    let (mut n_left, mut sum_left, mut sum_all) = (0usize, 0.0, 0.0);
    for &i in rows {
        sum_all += y[i];
        if x[(i, feature)] <= threshold {
            n_left += 1;
            sum_left += y[i];
        }
    }
    let n = rows.len();
    let n_right = n - n_left;
    if n_left == 0 || n_right == 0 {
        return 0.0;
    }
    let diff = sum_left / n_left as f64 - (sum_all - sum_left) / n_right as f64;
    (n_left * n_right) as f64 / n as f64 * diff * diff
}

fn feature_range(x: &DMatrix<f64>, rows: &[usize], feature: usize) -> (f64, f64) {
    rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let v = x[(i, feature)];
        (lo.min(v), hi.max(v))
    })
}

fn random_threshold<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let t = lo + rng.random::<f64>() * (hi - lo);
    if t < hi {
        t
    } else {
        lo
    }
}

fn propose<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    candidates: SplitCandidates,
    rng: &mut R,
) -> Option<Proposal> {
    if rows.len() < 2 {
        return None;
    }
    let first = y[rows[0]];
    if rows.iter().all(|&i| y[i] == first) {
        return None;
    }
    let ranges: Vec<(usize, f64, f64)> = (0..x.ncols())
        .filter_map(|j| {
            let (lo, hi) = feature_range(x, rows, j);
            (lo < hi).then_some((j, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return None;
    }
    let mut best: Option<Proposal> = None;
    let mut consider = |feature: usize, threshold: f64| {
        let gain = split_gain(x, y, rows, feature, threshold);
        if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Proposal {
                feature,
                threshold,
                gain,
            });
        }
    };
    match candidates {
        SplitCandidates::Random(k) => {
            for _ in 0..k.max(1) {
                let (j, lo, hi) = ranges[rng.random_range(0..ranges.len())];
                let t = random_threshold(lo, hi, rng);
                consider(j, t);
            }
        }
        SplitCandidates::PerFeature => {
            for &(j, lo, hi) in &ranges {
                let t = random_threshold(lo, hi, rng);
                consider(j, t);
            }
        }
    }
    best
}

fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
}

fn validate_training(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    check_dim(x.nrows(), y.len())?;
    if x.nrows() < 2 {
        return Err(invalid("a tree needs at least two training rows"));
    }
    if x.ncols() == 0 {
        return Err(Error::Empty("feature columns"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tree training data"));
    }
    Ok(())
}

/// Fits one extra tree on all rows of `x` (`n × d`).
///
/// The frontier leaf with the largest gain is split next; ties go to the
/// leaf created first. Growth stops at `max_leaf_nodes` or when no leaf has
/// a positive-gain proposal.
pub fn fit_extra_tree<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &TreeConfig,
    rng: &mut R,
) -> Result<TreeModel> {
    validate_training(x, y)?;
    if config.max_leaf_nodes < 2 {
        return Err(invalid("max_leaf_nodes must be at least 2"));
    }
    let all: Vec<usize> = (0..x.nrows()).collect();
    let mut nodes = vec![Node::Leaf {
        value: mean_of(y, &all),
        count: all.len(),
    }];
    let proposal = propose(x, y, &all, config.candidates, rng);
    let mut frontier = vec![FrontierLeaf {
        node: 0,
        rows: all,
        proposal,
    }];
    let mut leaves = 1;
    while leaves < config.max_leaf_nodes {
        // frontier is kept in creation order, so the first maximum wins ties
        let mut pick: Option<(usize, f64)> = None;
        for (k, leaf) in frontier.iter().enumerate() {
            if let Some(p) = &leaf.proposal {
                if pick.is_none_or(|(_, g)| p.gain > g) {
                    pick = Some((k, p.gain));
                }
            }
        }
        let Some((k, _)) = pick else { break };
        let leaf = frontier.remove(k);
        let Proposal { feature, threshold, .. } = leaf.proposal.expect("picked leaves carry a proposal");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            leaf.rows.iter().partition(|&&i| x[(i, feature)] <= threshold);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf {
            value: mean_of(y, &left_rows),
            count: left_rows.len(),
        });
        nodes.push(Node::Leaf {
            value: mean_of(y, &right_rows),
            count: right_rows.len(),
        });
        nodes[leaf.node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        leaves += 1;
        for (node, rows) in [(left, left_rows), (right, right_rows)] {
            let proposal = propose(x, y, &rows, config.candidates, rng);
            frontier.push(FrontierLeaf { node, rows, proposal });
        }
    }
    Ok(TreeModel {
        input_dim: x.ncols(),
        nodes,
    })
}

/// Fits a tree from its own seed, as used for every forest member.
pub fn fit_tree_with_seed(x: &DMatrix<f64>, y: &[f64], config: &TreeConfig, seed: u64) -> Result<TreeModel> {
    let mut rng = StreamRng::seed_from_u64(seed);
    fit_extra_tree(x, y, config, &mut rng)
}

/// Independent trees, each fit on the full data from a derived seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub seeds: Vec<u64>,
}

/// Seeds of the `n_trees` members of a forest grown from `seed`.
pub fn forest_seeds(n_trees: usize, seed: u64) -> Vec<u64> {
    (0..n_trees as u64).map(|m| derive_seed(seed, m)).collect()
}

pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], n_trees: usize, config: &TreeConfig, seed: u64) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(invalid("a forest needs at least one tree"));
    }
    validate_training(x, y)?;
    let seeds = forest_seeds(n_trees, seed);
    let trees = seeds
        .iter()
        .map(|&s| fit_tree_with_seed(x, y, config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, seeds })
}

impl ForestModel {
    /// Per-tree one-hot maps concatenated with weights `1/M` (hard mode).
    pub fn feature_map(&self, roles: &[VariableRole], c_continuous: f64, c_discrete: f64) -> Result<ConcatenatedMap> {
        let maps = self
            .trees
            .iter()
            .map(|t| t.feature_map(roles.to_vec(), c_continuous, c_discrete).map(AnyMap::from))
            .collect::<Result<Vec<_>>>()?;
        ConcatenatedMap::uniform(maps)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.trees {
            total += t.predict(x)?;
        }
        Ok(total / self.trees.len() as f64)
    }
}
