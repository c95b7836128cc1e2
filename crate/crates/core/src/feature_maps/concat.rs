use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AnyMap, FeatureMap, VariableRole};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Member {
    weight: f64,
    map: AnyMap,
}

#[derive(Serialize, Deserialize)]
struct ConcatDoc {
    members: Vec<Member>,
}

/// Weighted concatenation `φ(x) = [α₁ φ₁(x), …, α_M φ_M(x)]`.
///
/// With `β` the stacked member weights, `φ(x)ᵀβ = Σ α_m φ_m(x)ᵀβ_m` is the
/// ensemble prediction. All members must agree on input dimension and
/// variable roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConcatDoc", into = "ConcatDoc")]
pub struct ConcatenatedMap {
    members: Vec<Member>,
    offsets: Vec<usize>,
    output_dim: usize,
}

impl ConcatenatedMap {
    /// Equal weights `α_m = 1/M`.
    pub fn uniform(maps: Vec<AnyMap>) -> Result<Self> {
        let alpha = 1.0 / maps.len().max(1) as f64;
        Self::weighted(maps.into_iter().map(|m| (alpha, m)).collect())
    }

    pub fn weighted(members: Vec<(f64, AnyMap)>) -> Result<Self> {
        let members = members
            .into_iter()
            .map(|(weight, map)| Member { weight, map })
            .collect();
        Self::from_members(members)
    }

    fn from_members(members: Vec<Member>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("concatenated map members"))?;
        let roles = first.map.roles();
        let mut offsets = Vec::with_capacity(members.len());
        let mut next = 0;
        for m in &members {
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(invalid("member weights must be positive and finite"));
            }
            if m.map.roles() != roles {
                return Err(invalid("members disagree on input variables"));
            }
            offsets.push(next);
            next += m.map.output_dim();
        }
        Ok(Self {
            members,
            offsets,
            output_dim: next,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, m: usize) -> (f64, &AnyMap) {
        (self.members[m].weight, &self.members[m].map)
    }

    /// Switches every tree member, at any depth, to `mode`.
    pub fn set_tree_mode(&mut self, mode: super::TreeMode) {
        for m in &mut self.members {
            m.map.set_tree_mode(mode);
        }
    }

    /// Feature index range of member `m`.
    pub fn member_range(&self, m: usize) -> core::ops::Range<usize> {
        self.offsets[m]..self.offsets[m] + self.members[m].map.output_dim()
    }

    fn each_block(&self, out: &mut [f64], mut f: impl FnMut(&AnyMap, &mut [f64]) -> Result<()>) -> Result<()> {
        for (m, member) in self.members.iter().enumerate() {
            let slot = &mut out[self.member_range(m)];
            f(&member.map, slot)?;
            let s = member.weight;
            slot.iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    }
}

impl TryFrom<ConcatDoc> for ConcatenatedMap {
    type Error = Error;

    fn try_from(doc: ConcatDoc) -> Result<Self> {
        Self::from_members(doc.members)
    }
}

impl From<ConcatenatedMap> for ConcatDoc {
    fn from(m: ConcatenatedMap) -> Self {
        ConcatDoc { members: m.members }
    }
}

impl FeatureMap for ConcatenatedMap {
    fn input_dim(&self) -> usize {
        self.members[0].map.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn roles(&self) -> &[VariableRole] {
        self.members[0].map.roles()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let _ = self.each_block(out, |map, slot| {
            map.eval_into(x, slot);
            Ok(())
        });
    }

    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        self.each_block(out, |map, slot| map.partial_into(x, j, slot))
    }

    fn contrast_eval_into(&self, x: &[f64], out: &mut [f64]) {
        let _ = self.each_block(out, |map, slot| {
            map.contrast_eval_into(x, slot);
            Ok(())
        });
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.input_dim();
        let total = self.output_dim;
        let mut scratch = Vec::new();
        for (m, member) in self.members.iter().enumerate() {
            let width = member.map.output_dim();
            scratch.clear();
            scratch.resize(d * width, 0.0);
            member.map.gradient_into(x, &mut scratch)?;
            let s = member.weight;
            let start = self.offsets[m];
            for j in 0..d {
                let dst = &mut out[j * total + start..j * total + start + width];
                for (o, v) in dst.iter_mut().zip(&scratch[j * width..(j + 1) * width]) {
                    *o = s * v;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_maps::{evaluate, partial, RandomFourierMap};
    use alloc::vec;

    fn two_fourier() -> ConcatenatedMap {
        let a = RandomFourierMap::with_seed(2, 5, 1.0, 1).unwrap();
        let b = RandomFourierMap::with_seed(2, 3, 2.0, 2).unwrap();
        ConcatenatedMap::uniform(vec![a.into(), b.into()]).unwrap()
    }

    #[test]
    fn kernel_is_sum_of_scaled_member_kernels() {
        let map = two_fourier();
        let (x, y) = ([0.3, -0.2], [1.0, 0.4]);
        let k = |m: &dyn FeatureMap| {
            let p = evaluate(m, &x).unwrap();
            let q = evaluate(m, &y).unwrap();
            crate::linalg::dot(&p, &q)
        };
        let expected = 0.25 * k(map.member(0).1) + 0.25 * k(map.member(1).1);
        assert!((k(&map) - expected).abs() < 1e-14);
        assert_eq!(map.output_dim(), 8);
    }

    #[test]
    fn gradient_matches_scaled_member_partials() {
        let map = two_fourier();
        let x = [0.7, 0.1];
        let mut grad = vec![0.0; 2 * 8];
        map.gradient_into(&x, &mut grad).unwrap();
        for j in 0..2 {
            let p = partial(&map, &x, j).unwrap();
            for (g, q) in grad[j * 8..(j + 1) * 8].iter().zip(&p) {
                assert!((g - q).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn members_must_agree_on_roles() {
        let a = RandomFourierMap::with_seed(2, 5, 1.0, 1).unwrap();
        let b = RandomFourierMap::with_seed(3, 5, 1.0, 1).unwrap();
        assert!(ConcatenatedMap::uniform(vec![a.into(), b.into()]).is_err());
        assert!(ConcatenatedMap::uniform(vec![]).is_err());
    }
}
