//! Basis expansions `φ: ℝᵈ → ℝᴰ` with exact per-variable derivatives.
//!
//! Every model class in the crate is a [`FeatureMap`]: a function is written
//! as `f(x) = φ(x)ᵀβ`, so a Gaussian prior on `β` turns it into a Gaussian
//! process with kernel `k(x, x') = φ(x)ᵀφ(x')`. Continuous inputs are
//! differentiated analytically; binary and categorical inputs are handled
//! through level contrasts `φ(xʲ = a, x⁻ʲ) − φ(xʲ = b, x⁻ʲ)`.

mod additive;
mod concat;
mod fourier;
mod tree;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use additive::{AdditiveBasisMap, AdditiveBlock, DEFAULT_INTERIOR_KNOTS};
pub use concat::ConcatenatedMap;
pub use fourier::RandomFourierMap;
pub use tree::{sigmoid, Condition, Direction, LeafRule, SoftTreeMap, TreeMode};

/// How an input variable enters the importance computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum VariableRole {
    Continuous,
    /// Levels `{0, 1}`.
    Binary,
    /// An explicit, duplicate-free list of numeric codes.
    Categorical { levels: Vec<f64> },
}

impl VariableRole {
    pub fn is_continuous(&self) -> bool {
        matches!(self, VariableRole::Continuous)
    }

    pub fn levels(&self) -> Option<Vec<f64>> {
        match self {
            VariableRole::Continuous => None,
            VariableRole::Binary => Some(vec![0.0, 1.0]),
            VariableRole::Categorical { levels } => Some(levels.clone()),
        }
    }

    /// Level pairs `(a, b)` whose contrasts `φ(a) − φ(b)` enter the importance.
    ///
    /// Binary variables give the single pair `(1, 0)`; categorical variables
    /// give every unordered pair once.
    pub fn contrast_pairs(&self) -> Vec<(f64, f64)> {
        match self {
            VariableRole::Continuous => Vec::new(),
            VariableRole::Binary => vec![(1.0, 0.0)],
            VariableRole::Categorical { levels } => {
                let mut pairs = Vec::new();
                for (i, &a) in levels.iter().enumerate() {
                    for &b in &levels[i + 1..] {
                        pairs.push((b, a));
                    }
                }
                pairs
            }
        }
    }

    pub fn has_level(&self, value: f64) -> bool {
        match self {
            VariableRole::Continuous => true,
            VariableRole::Binary => value == 0.0 || value == 1.0,
            VariableRole::Categorical { levels } => levels.contains(&value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let VariableRole::Categorical { levels } = self {
            if levels.is_empty() {
                return Err(Error::Empty("categorical level list"));
            }
            for (i, a) in levels.iter().enumerate() {
                if !a.is_finite() {
                    return Err(Error::NonFinite("categorical levels"));
                }
                if levels[i + 1..].contains(a) {
                    return Err(crate::error::invalid("duplicate categorical level"));
                }
            }
        }
        Ok(())
    }
}

/// A fixed basis expansion with closed-form partial derivatives.
///
/// Implementations are immutable after construction, so evaluation and
/// differentiation can be shared freely between threads.
pub trait FeatureMap {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn roles(&self) -> &[VariableRole];

    /// Writes `φ(x)` into `out`. Lengths are assumed to be checked by the caller.
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∂φ(x)/∂xʲ` into `out`.
    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()>;

    /// The evaluation used for discrete contrasts. Tree maps use their
    /// smooth form here even in hard mode.
    fn contrast_eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.eval_into(x, out)
    }

    /// Writes all partial derivatives as a row-major `d × D` block; rows of
    /// non-continuous variables are left at zero.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.output_dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.input_dim() {
            if self.roles()[j].is_continuous() {
                self.partial_into(x, j, &mut out[j * dim..(j + 1) * dim])?;
            }
        }
        Ok(())
    }
}

fn check_input<M: FeatureMap + ?Sized>(map: &M, x: &[f64]) -> Result<()> {
    check_dim(map.input_dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input vector"));
    }
    Ok(())
}

fn check_variable<M: FeatureMap + ?Sized>(map: &M, j: usize) -> Result<()> {
    if j >= map.input_dim() {
        return Err(Error::VariableOutOfRange {
            index: j,
            dim: map.input_dim(),
        });
    }
    Ok(())
}

/// `φ(x)` with input validation.
pub fn evaluate<M: FeatureMap + ?Sized>(map: &M, x: &[f64]) -> Result<Vec<f64>> {
    check_input(map, x)?;
    let mut out = vec![0.0; map.output_dim()];
    map.eval_into(x, &mut out);
    Ok(out)
}

/// `∂φ(x)/∂xʲ` for a continuous variable `j`.
pub fn partial<M: FeatureMap + ?Sized>(map: &M, x: &[f64], j: usize) -> Result<Vec<f64>> {
    check_input(map, x)?;
    check_variable(map, j)?;
    if !map.roles()[j].is_continuous() {
        return Err(Error::RoleMismatch {
            variable: j,
            reason: "discrete variables use contrasts, not derivatives",
        });
    }
    let mut out = vec![0.0; map.output_dim()];
    map.partial_into(x, j, &mut out)?;
    Ok(out)
}

/// `φ(xʲ = a, x⁻ʲ) − φ(xʲ = b, x⁻ʲ)` for a discrete variable `j`.
pub fn contrast_features<M: FeatureMap + ?Sized>(
    map: &M,
    x: &[f64],
    j: usize,
    level_a: f64,
    level_b: f64,
) -> Result<Vec<f64>> {
    check_input(map, x)?;
    check_variable(map, j)?;
    let role = &map.roles()[j];
    if role.is_continuous() {
        return Err(Error::RoleMismatch {
            variable: j,
            reason: "contrasts are defined for binary or categorical variables",
        });
    }
    for level in [level_a, level_b] {
        if !role.has_level(level) {
            return Err(Error::UnknownLevel { variable: j, level });
        }
    }
    if level_a == level_b {
        return Err(crate::error::invalid("contrast levels must differ"));
    }
    let mut out = vec![0.0; map.output_dim()];
    ContrastScratch::new(map).contrast_into(map, x, j, (level_a, level_b), &mut out);
    Ok(out)
}

/// Reusable buffers for unchecked contrast evaluation.
pub(crate) struct ContrastScratch {
    other: Vec<f64>,
    point: Vec<f64>,
}

impl ContrastScratch {
    pub(crate) fn new<M: FeatureMap + ?Sized>(map: &M) -> Self {
        Self {
            other: vec![0.0; map.output_dim()],
            point: vec![0.0; map.input_dim()],
        }
    }

    pub(crate) fn contrast_into<M: FeatureMap + ?Sized>(
        &mut self,
        map: &M,
        x: &[f64],
        j: usize,
        (level_a, level_b): (f64, f64),
        out: &mut [f64],
    ) {
        self.point.copy_from_slice(x);
        self.point[j] = level_a;
        map.contrast_eval_into(&self.point, out);
        self.point[j] = level_b;
        map.contrast_eval_into(&self.point, &mut self.other);
        for (o, s) in out.iter_mut().zip(&self.other) {
            *o -= *s;
        }
    }
}

/// Evaluates the map on every row of `x` (an `n × d` matrix).
pub fn feature_matrix<M: FeatureMap + ?Sized>(map: &M, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(map.input_dim(), x.ncols())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let dim = map.output_dim();
    let mut phi = DMatrix::zeros(x.nrows(), dim);
    let mut row = vec![0.0; x.ncols()];
    let mut out = vec![0.0; dim];
    for i in 0..x.nrows() {
        copy_row(x, i, &mut row);
        map.eval_into(&row, &mut out);
        for (k, v) in out.iter().enumerate() {
            phi[(i, k)] = *v;
        }
    }
    Ok(phi)
}

pub(crate) fn copy_row(x: &DMatrix<f64>, i: usize, row: &mut [f64]) {
    for (j, r) in row.iter_mut().enumerate() {
        *r = x[(i, j)];
    }
}

/// Any of the concrete maps, tagged by kind for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyMap {
    RandomFourier(RandomFourierMap),
    SoftTree(SoftTreeMap),
    AdditiveBasis(AdditiveBasisMap),
    Concatenated(ConcatenatedMap),
}

impl AnyMap {
    /// Switches every tree map contained in `self` to `mode`; other kinds
    /// are unaffected.
    pub fn set_tree_mode(&mut self, mode: TreeMode) {
        match self {
            AnyMap::SoftTree(t) => t.set_mode(mode),
            AnyMap::Concatenated(c) => c.set_tree_mode(mode),
            AnyMap::RandomFourier(_) | AnyMap::AdditiveBasis(_) => {}
        }
    }

    pub fn with_tree_mode(mut self, mode: TreeMode) -> Self {
        self.set_tree_mode(mode);
        self
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyMap::RandomFourier($m) => $e,
            AnyMap::SoftTree($m) => $e,
            AnyMap::AdditiveBasis($m) => $e,
            AnyMap::Concatenated($m) => $e,
        }
    };
}

impl FeatureMap for AnyMap {
    fn input_dim(&self) -> usize {
        delegate!(self, m => m.input_dim())
    }
    fn output_dim(&self) -> usize {
        delegate!(self, m => m.output_dim())
    }
    fn roles(&self) -> &[VariableRole] {
        delegate!(self, m => m.roles())
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.eval_into(x, out))
    }
    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        delegate!(self, m => m.partial_into(x, j, out))
    }
    fn contrast_eval_into(&self, x: &[f64], out: &mut [f64]) {
        delegate!(self, m => m.contrast_eval_into(x, out))
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        delegate!(self, m => m.gradient_into(x, out))
    }
}

impl From<RandomFourierMap> for AnyMap {
    fn from(m: RandomFourierMap) -> Self {
        AnyMap::RandomFourier(m)
    }
}

impl From<SoftTreeMap> for AnyMap {
    fn from(m: SoftTreeMap) -> Self {
        AnyMap::SoftTree(m)
    }
}

impl From<AdditiveBasisMap> for AnyMap {
    fn from(m: AdditiveBasisMap) -> Self {
        AnyMap::AdditiveBasis(m)
    }
}

impl From<ConcatenatedMap> for AnyMap {
    fn from(m: ConcatenatedMap) -> Self {
        AnyMap::Concatenated(m)
    }
}
