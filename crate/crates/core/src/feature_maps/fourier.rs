use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{FeatureMap, VariableRole};
use crate::error::{check_dim, invalid, Result};

/// Random Fourier features for the RBF kernel `exp(−‖x − x′‖² / (2ℓ²))`.
///
/// `φ(x) = √(2/D) · cos(Wᵀx/ℓ + b)` with `W` standard normal and `b` uniform
/// on `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFourierMap {
    input_dim: usize,
    output_dim: usize,
    lengthscale: f64,
    /// Row-major `d × D`.
    weights: Vec<f64>,
    offsets: Vec<f64>,
    roles: Vec<VariableRole>,
    seed: Option<u64>,
}

impl RandomFourierMap {
    /// Draws `W` and `b` from `rng`. All variables are continuous.
    pub fn sample<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, lengthscale: f64, rng: &mut R) -> Result<Self> {
        let mut weights = Vec::with_capacity(input_dim * output_dim);
        for _ in 0..input_dim * output_dim {
            weights.push(StandardNormal.sample(rng));
        }
        let uniform = Uniform::new(0.0, 2.0 * PI).map_err(|_| invalid("offset range"))?;
        let offsets = (0..output_dim).map(|_| uniform.sample(rng)).collect();
        Self::from_parts(input_dim, output_dim, lengthscale, weights, offsets)
    }

    /// Seeded construction; the seed is kept for provenance in serialized form.
    pub fn with_seed(input_dim: usize, output_dim: usize, lengthscale: f64, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, 0);
        let mut map = Self::sample(input_dim, output_dim, lengthscale, &mut rng)?;
        map.seed = Some(seed);
        Ok(map)
    }

    pub fn from_parts(
        input_dim: usize,
        output_dim: usize,
        lengthscale: f64,
        weights: Vec<f64>,
        offsets: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("random Fourier map needs positive dimensions"));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(invalid("lengthscale must be positive and finite"));
        }
        check_dim(input_dim * output_dim, weights.len())?;
        check_dim(output_dim, offsets.len())?;
        if weights.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(crate::error::Error::NonFinite("random Fourier parameters"));
        }
        Ok(Self {
            input_dim,
            output_dim,
            lengthscale,
            weights,
            offsets,
            roles: vec![VariableRole::Continuous; input_dim],
            seed: None,
        })
    }

    pub fn with_roles(mut self, roles: Vec<VariableRole>) -> Result<Self> {
        check_dim(self.input_dim, roles.len())?;
        for r in &roles {
            r.validate()?;
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[j * self.output_dim + k]
    }

    fn scale(&self) -> f64 {
        libm::sqrt(2.0 / self.output_dim as f64)
    }

    /// Phases `Wᵀx/ℓ + b` into `out`.
    fn phases(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.offsets);
        let inv = 1.0 / self.lengthscale;
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let row = &self.weights[j * self.output_dim..(j + 1) * self.output_dim];
            let s = xj * inv;
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * s;
            }
        }
    }
}

impl FeatureMap for RandomFourierMap {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn roles(&self) -> &[VariableRole] {
        &self.roles
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.phases(x, out);
        let scale = self.scale();
        for o in out.iter_mut() {
            *o = scale * libm::cos(*o);
        }
    }

    fn partial_into(&self, x: &[f64], j: usize, out: &mut [f64]) -> Result<()> {
        self.phases(x, out);
        let scale = self.scale() / self.lengthscale;
        let row = &self.weights[j * self.output_dim..(j + 1) * self.output_dim];
        for (o, w) in out.iter_mut().zip(row) {
            *o = -scale * w * libm::sin(*o);
        }
        Ok(())
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.output_dim;
        let mut sines = vec![0.0; dim];
        self.phases(x, &mut sines);
        let scale = self.scale() / self.lengthscale;
        for s in sines.iter_mut() {
            *s = -scale * libm::sin(*s);
        }
        for j in 0..self.input_dim {
            let block = &mut out[j * dim..(j + 1) * dim];
            if self.roles[j].is_continuous() {
                let row = &self.weights[j * dim..(j + 1) * dim];
                for ((o, w), s) in block.iter_mut().zip(row).zip(&sines) {
                    *o = w * s;
                }
            } else {
                block.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_maps::{evaluate, partial};
    use rand::SeedableRng;

    #[test]
    fn degenerate_weights_give_sqrt_two() {
        let map = RandomFourierMap::from_parts(3, 1, 1.0, vec![0.0; 3], vec![0.0]).unwrap();
        let phi = evaluate(&map, &[0.3, -1.0, 7.0]).unwrap();
        assert_eq!(phi, vec![libm::sqrt(2.0)]);
    }

    #[test]
    fn entries_bounded_by_normalization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let map = RandomFourierMap::sample(4, 50, 0.7, &mut rng).unwrap();
        let bound = libm::sqrt(2.0 / 50.0);
        let phi = evaluate(&map, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(phi.iter().all(|v| v.abs() <= bound + 1e-15));
    }

    #[test]
    fn gradient_rows_match_partials() {
        let map = RandomFourierMap::with_seed(3, 20, 1.3, 11).unwrap();
        let x = [0.2, -0.4, 1.1];
        let mut grad = vec![0.0; 60];
        map.gradient_into(&x, &mut grad).unwrap();
        for j in 0..3 {
            let p = partial(&map, &x, j).unwrap();
            for k in 0..20 {
                assert!((grad[j * 20 + k] - p[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_lengthscale_and_shapes() {
        assert!(RandomFourierMap::from_parts(1, 1, 0.0, vec![0.0], vec![0.0]).is_err());
        assert!(RandomFourierMap::from_parts(2, 1, 1.0, vec![0.0], vec![0.0]).is_err());
        let map = RandomFourierMap::with_seed(2, 4, 1.0, 0).unwrap();
        assert!(evaluate(&map, &[1.0]).is_err());
    }
}
