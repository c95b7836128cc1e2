use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureMap, VariableRole};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::quantile_sorted;

pub const DEFAULT_INTERIOR_KNOTS: usize = 10;
const DEGREE: usize = 3;

/// Basis block of one input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case")]
pub enum AdditiveBlock {
    /// Clamped cubic B-spline; `knots` is the full knot vector with the
    /// boundary knots repeated four times. Inputs outside the boundary are
    /// clamped to it.
    Spline { knots: Vec<f64> },
    /// The raw value (binary variables).
    Linear,
    /// Indicators of every level except the first.
    Indicators { levels: Vec<f64> },
    /// Constant column: contributes no features.
    Empty,
}

impl AdditiveBlock {
    fn width(&self) -> usize {
        match self {
            AdditiveBlock::Spline { knots } => knots.len() - DEGREE - 1,
            AdditiveBlock::Linear => 1,
            AdditiveBlock::Indicators { levels } => levels.len().saturating_sub(1),
            AdditiveBlock::Empty => 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AdditiveDoc {
    roles: Vec<VariableRole>,
    blocks: Vec<AdditiveBlock>,
    prior_center: Option<Vec<f64>>,
}

/// Generalized additive basis `φ(x) = [1, h₁(x¹), …, h_d(xᵈ)]`.
///
/// Continuous variables get a cubic B-spline block with interior knots at
/// empirical quantiles, so `∂φ/∂xʲ` is nonzero only inside block `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdditiveDoc", into = "AdditiveDoc")]
pub struct AdditiveBasisMap {
    roles: Vec<VariableRole>,
    blocks: Vec<AdditiveBlock>,
    prior_center: Option<Vec<f64>>,
    offsets: Vec<usize>,
    output_dim: usize,
}

impl AdditiveBasisMap {
    /// Fits knot vectors to the columns of `x` (`n × d`).
    pub fn fit(x: &DMatrix<f64>, roles: Vec<VariableRole>, interior_knots: usize) -> Result<Self> {
        check_dim(x.ncols(), roles.len())?;
        if x.nrows() == 0 {
            return Err(Error::Empty("training inputs"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        let blocks = roles
            .iter()
            .enumerate()
            .map(|(j, role)| {
                let mut column: Vec<f64> = x.column(j).iter().copied().collect();
                column.sort_by(f64::total_cmp);
                let (lo, hi) = (column[0], column[column.len() - 1]);
                match role {
                    _ if lo == hi => AdditiveBlock::Empty,
                    VariableRole::Continuous => AdditiveBlock::Spline {
                        knots: clamped_knots(&column, interior_knots),
                    },
                    VariableRole::Binary => AdditiveBlock::Linear,
                    VariableRole::Categorical { levels } => AdditiveBlock::Indicators { levels: levels.clone() },
                }
            })
            .collect();
        Self::from_blocks(roles, blocks, None)
    }

    pub fn from_blocks(
        roles: Vec<VariableRole>,
        blocks: Vec<AdditiveBlock>,
        prior_center: Option<Vec<f64>>,
    ) -> Result<Self> {
        check_dim(roles.len(), blocks.len())?;
        if roles.is_empty() {
            return Err(invalid("additive map needs at least one variable"));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut next = 1;
        for (role, block) in roles.iter().zip(&blocks) {
            role.validate()?;
            if let AdditiveBlock::Spline { knots } = block {
                validate_knots(knots)?;
            }
            offsets.push(next);
            next += block.width();
        }
        if let Some(mu) = &prior_center {
            check_dim(next, mu.len())?;
        }
        Ok(Self {
            roles,
            blocks,
            prior_center,
            offsets,
            output_dim: next,
        })
    }

    pub fn with_prior_center(self, mu: Vec<f64>) -> Result<Self> {
        Self::from_blocks(self.roles, self.blocks, Some(mu))
    }

    pub fn prior_center(&self) -> Option<&[f64]> {
        self.prior_center.as_deref()
    }

    pub fn blocks(&self) -> &[AdditiveBlock] {
        &self.blocks
    }

    /// Feature index range of variable `j`.
    pub fn block_range(&self, j: usize) -> core::ops::Range<usize> {
        self.offsets[j]..self.offsets[j] + self.blocks[j].width()
    }
}

fn validate_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 * (DEGREE + 1) {
        return Err(invalid("spline knot vector too short"));
    }
    if knots.iter().any(|v| !v.is_finite()) || knots.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("spline knots must be finite and non-decreasing"));
    }
    if knots[0] >= knots[knots.len() - 1] {
        return Err(invalid("spline knots span an empty interval"));
    }
    Ok(())
}

fn clamped_knots(sorted: &[f64], interior: usize) -> Vec<f64> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut knots = vec![lo; DEGREE + 1];
    for k in 1..=interior {
        let q = quantile_sorted(sorted, k as f64 / (interior + 1) as f64);
        if q > lo && q < hi && q > *knots.last().unwrap() {
            knots.push(q);
        }
    }
    knots.extend(core::iter::repeat_n(hi, DEGREE + 1));
    knots
}

/// Index `i` with `t_i ≤ x < t_{i+1}`, using the last nonempty span at the
/// right boundary.
fn find_span(knots: &[f64], x: f64) -> usize {
    let n_basis = knots.len() - DEGREE - 1;
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    let mut lo = DEGREE;
    let mut hi = n_basis;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero basis functions of degree `p` at span `i`: values of
/// `B_{i−p}, …, B_i` written to `out[..=p]`.
fn basis_funs(knots: &[f64], i: usize, x: f64, p: usize, out: &mut [f64]) {
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    out[0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[i + 1 - j];
        right[j] = knots[i + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

fn spline_values(knots: &[f64], x: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let x = x.clamp(knots[0], knots[knots.len() - 1]);
    let span = find_span(knots, x);
    let mut vals = [0.0; DEGREE + 1];
    basis_funs(knots, span, x, DEGREE, &mut vals);
    for (r, v) in vals.iter().enumerate() {
        out[span - DEGREE + r] = *v;
    }
}

fn spline_slopes(knots: &[f64], x: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if x < lo || x > hi {
        return;
    }
    let span = find_span(knots, x);
    // lower-degree basis B_{span−p+1..span, p−1}
    let mut lower = [0.0; DEGREE + 1];
    basis_funs(knots, span, x, DEGREE - 1, &mut lower);
    let p = DEGREE as f64;
    let lower_at = |k: isize| -> f64 {
        let first = span as isize - (DEGREE as isize - 1);
        if k < first || k > span as isize {
            0.0
        } else {
            lower[(k - first) as usize]
        }
    };
    for k in (span - DEGREE)..=span {
        let ki = k as isize;
        let mut d = 0.0;
        let w1 = knots[k + DEGREE] - knots[k];
        if w1 > 0.0 {
            d += lower_at(ki) / w1;
        }
        let w2 = knots[k + DEGREE + 1] - knots[k + 1];
        if w2 > 0.0 {
            d -= lower_at(ki + 1) / w2;
        }
        out[k] = p * d;
    }
}

impl TryFrom<AdditiveDoc> for AdditiveBasisMap {
    type Error = Error;

    fn try_from(doc: AdditiveDoc) -> Result<Self> {
        Self::from_blocks(doc.roles, doc.blocks, doc.prior_center)
    }
}

impl From<AdditiveBasisMap> for AdditiveDoc {
    fn from(m: AdditiveBasisMap) -> Self {
        AdditiveDoc {
            roles: m.roles,
            blocks: m.blocks,
            prior_center: m.prior_center,
        }
    }
}

impl FeatureMap for AdditiveBasisMap {
    fn input_dim(&self) -> usize {
        self.roles.len()
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn roles(&self) -> &[VariableRole] {
        &self.roles
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (j, block) in self.blocks.iter().enumerate() {
            let range = self.block_range(j);
            let slot = &mut out[range];
            match block {
                AdditiveBlock::Spline { knots } => spline_values(knots, x[j], slot),
                AdditiveBlock::Linear => slot[0] = x[j],
                AdditiveBlock::Indicators { levels } => {
                    for (s, level) in slot.iter_mut().zip(&levels[1..]) {
                        *s = if x[j] == *level { 1.0 } else { 0.0 };
                    }
                }
                AdditiveBlock::Empty => {}
            }
        }
    }

    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let range = self.block_range(j);
        match &self.blocks[j] {
            AdditiveBlock::Spline { knots } => spline_slopes(knots, x[j], &mut out[range]),
            AdditiveBlock::Linear => out[range.start] = 1.0,
            AdditiveBlock::Indicators { .. } => {
                return Err(Error::RoleMismatch {
                    variable: j,
                    reason: "indicator blocks have no derivative",
                })
            }
            AdditiveBlock::Empty => {}
        }
        Ok(())
    }
}
