use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FeatureMap, VariableRole};
use crate::error::{check_dim, invalid, Error, Result};

/// Logistic function `1 / (1 + e^{−t})`.
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `x ≤ a` (left branch).
    LessEq,
    /// `x > a` (right branch).
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    pub threshold: f64,
    pub direction: Direction,
}

impl Condition {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.direction {
            Direction::LessEq => x[self.feature] <= self.threshold,
            Direction::Greater => x[self.feature] > self.threshold,
        }
    }
}

/// Conjunction of conditions along a root-to-leaf path. Empty means "always".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeafRule {
    pub conditions: Vec<Condition>,
}

impl LeafRule {
    pub fn holds(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    /// One-hot leaf membership.
    Hard,
    /// Products of sigmoids; each gate uses the smoothness of its split
    /// variable's role.
    Soft,
}

#[derive(Serialize, Deserialize)]
struct SoftTreeDoc {
    input_dim: usize,
    roles: Vec<VariableRole>,
    leaves: Vec<LeafRule>,
    c_continuous: f64,
    c_discrete: f64,
    mode: TreeMode,
}

/// Leaf-membership features of a decision tree.
///
/// In hard mode `φ_k(x) = 1(x ∈ leaf k)`. In soft mode every indicator
/// `1(x > a)` becomes `σ(c(x − a))` and `1(x ≤ a)` becomes `1 − σ(c(x − a))`,
/// which makes the map differentiable. Splits on continuous variables use
/// `c_continuous` and splits on binary or categorical variables use
/// `c_discrete`, so derivatives and contrasts come from the same smooth
/// function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SoftTreeDoc", into = "SoftTreeDoc")]
pub struct SoftTreeMap {
    input_dim: usize,
    roles: Vec<VariableRole>,
    leaves: Vec<LeafRule>,
    c_continuous: f64,
    c_discrete: f64,
    mode: TreeMode,
    // distinct (feature, threshold, smoothness) triples and, per leaf,
    // (split index, is_greater)
    splits: Vec<(usize, f64, f64)>,
    paths: Vec<Vec<(usize, bool)>>,
}

pub const DEFAULT_C_CONTINUOUS: f64 = 1.0;
pub const DEFAULT_C_DISCRETE: f64 = 0.1;

impl SoftTreeMap {
    /// Builds a map with default smoothness (1 for continuous, 0.1 for discrete)
    /// in hard mode; all variables continuous.
    pub fn new(input_dim: usize, leaves: Vec<LeafRule>) -> Result<Self> {
        Self::with_config(
            input_dim,
            vec![VariableRole::Continuous; input_dim],
            leaves,
            DEFAULT_C_CONTINUOUS,
            DEFAULT_C_DISCRETE,
            TreeMode::Hard,
        )
    }

    pub fn with_config(
        input_dim: usize,
        roles: Vec<VariableRole>,
        leaves: Vec<LeafRule>,
        c_continuous: f64,
        c_discrete: f64,
        mode: TreeMode,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("tree map needs a positive input dimension"));
        }
        check_dim(input_dim, roles.len())?;
        if leaves.is_empty() {
            return Err(Error::Empty("leaf rules"));
        }
        for c in [c_continuous, c_discrete] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("smoothness must be positive and finite"));
            }
        }
        for r in &roles {
            r.validate()?;
        }
        let mut index: BTreeMap<(usize, u64), usize> = BTreeMap::new();
        let mut splits = Vec::new();
        let mut paths = Vec::with_capacity(leaves.len());
        for leaf in &leaves {
            let mut path = Vec::with_capacity(leaf.conditions.len());
            for c in &leaf.conditions {
                if c.feature >= input_dim {
                    return Err(Error::VariableOutOfRange {
                        index: c.feature,
                        dim: input_dim,
                    });
                }
                if !c.threshold.is_finite() {
                    return Err(Error::NonFinite("split threshold"));
                }
                let key = (c.feature, c.threshold.to_bits());
                let id = *index.entry(key).or_insert_with(|| {
                    let smoothness = if roles[c.feature].is_continuous() {
                        c_continuous
                    } else {
                        c_discrete
                    };
                    splits.push((c.feature, c.threshold, smoothness));
                    splits.len() - 1
                });
                path.push((id, c.direction == Direction::Greater));
            }
            paths.push(path);
        }
        Ok(Self {
            input_dim,
            roles,
            leaves,
            c_continuous,
            c_discrete,
            mode,
            splits,
            paths,
        })
    }

    pub fn leaves(&self) -> &[LeafRule] {
        &self.leaves
    }

    pub fn mode(&self) -> TreeMode {
        self.mode
    }

    pub fn c_continuous(&self) -> f64 {
        self.c_continuous
    }

    pub fn c_discrete(&self) -> f64 {
        self.c_discrete
    }

    pub fn with_mode(mut self, mode: TreeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn set_mode(&mut self, mode: TreeMode) {
        self.mode = mode;
    }

    pub fn with_roles(self, roles: Vec<VariableRole>) -> Result<Self> {
        Self::with_config(self.input_dim, roles, self.leaves, self.c_continuous, self.c_discrete, self.mode)
    }

    fn hard_into(&self, x: &[f64], out: &mut [f64]) {
        let goes_right: Vec<bool> = self.splits.iter().map(|&(f, a, _)| x[f] > a).collect();
        for (o, path) in out.iter_mut().zip(&self.paths) {
            let inside = path.iter().all(|&(s, greater)| goes_right[s] == greater);
            *o = if inside { 1.0 } else { 0.0 };
        }
    }

    fn soft_into(&self, x: &[f64], out: &mut [f64]) {
        // (σ(t), σ(−t)) per split; the complement is computed directly
        let gates: Vec<(f64, f64)> = self
            .splits
            .iter()
            .map(|&(f, a, c)| {
                let t = c * (x[f] - a);
                (sigmoid(t), sigmoid(-t))
            })
            .collect();
        for (o, path) in out.iter_mut().zip(&self.paths) {
            *o = path
                .iter()
                .map(|&(s, greater)| if greater { gates[s].0 } else { gates[s].1 })
                .product();
        }
    }

    /// Gate values and their derivatives with respect to the split feature.
    fn gates_with_slopes(&self, x: &[f64]) -> Vec<(f64, f64, f64)> {
        self.splits
            .iter()
            .map(|&(f, a, c)| {
                let t = c * (x[f] - a);
                let up = sigmoid(t);
                let down = sigmoid(-t);
                (up, down, c * up * down)
            })
            .collect()
    }

    /// Calls `emit(feature, leaf, value)` for every nonzero term of the
    /// product-rule derivative of each leaf.
    fn for_each_partial(&self, x: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let gates = self.gates_with_slopes(x);
        let mut factors = Vec::new();
        let mut suffix = Vec::new();
        for (k, path) in self.paths.iter().enumerate() {
            factors.clear();
            factors.extend(path.iter().map(|&(s, greater)| if greater { gates[s].0 } else { gates[s].1 }));
            suffix.clear();
            suffix.resize(factors.len() + 1, 1.0);
            for l in (0..factors.len()).rev() {
                suffix[l] = suffix[l + 1] * factors[l];
            }
            let mut prefix = 1.0;
            for (l, &(s, greater)) in path.iter().enumerate() {
                let slope = if greater { gates[s].2 } else { -gates[s].2 };
                emit(self.splits[s].0, k, slope * prefix * suffix[l + 1]);
                prefix *= factors[l];
            }
        }
    }
}

impl TryFrom<SoftTreeDoc> for SoftTreeMap {
    type Error = Error;

    fn try_from(doc: SoftTreeDoc) -> Result<Self> {
        Self::with_config(doc.input_dim, doc.roles, doc.leaves, doc.c_continuous, doc.c_discrete, doc.mode)
    }
}

impl From<SoftTreeMap> for SoftTreeDoc {
    fn from(m: SoftTreeMap) -> Self {
        SoftTreeDoc {
            input_dim: m.input_dim,
            roles: m.roles,
            leaves: m.leaves,
            c_continuous: m.c_continuous,
            c_discrete: m.c_discrete,
            mode: m.mode,
        }
    }
}

impl FeatureMap for SoftTreeMap {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.leaves.len()
    }

    fn roles(&self) -> &[VariableRole] {
        &self.roles
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self.mode {
            TreeMode::Hard => self.hard_into(x, out),
            TreeMode::Soft => self.soft_into(x, out),
        }
    }

    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        if self.mode == TreeMode::Hard {
            return Err(Error::NotDifferentiable);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_partial(x, |feature, leaf, v| {
            if feature == j {
                out[leaf] += v;
            }
        });
        Ok(())
    }

    fn contrast_eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.soft_into(x, out);
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.mode == TreeMode::Hard {
            return Err(Error::NotDifferentiable);
        }
        let dim = self.leaves.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        let roles = &self.roles;
        self.for_each_partial(x, |feature, leaf, v| {
            if roles[feature].is_continuous() {
                out[feature * dim + leaf] += v;
            }
        });
        Ok(())
    }
}
