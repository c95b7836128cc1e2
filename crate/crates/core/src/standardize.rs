//! Column standardization fitted on training data.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::feature_maps::VariableRole;

/// Per-column `(x − mean) / sd` for continuous columns; discrete columns pass
/// through unchanged (mean 0, scale 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation; constant columns get scale 1.
    pub fn fit(x: &DMatrix<f64>, roles: &[VariableRole]) -> Result<Self> {
        check_dim(roles.len(), x.ncols())?;
        if x.nrows() == 0 {
            return Err(Error::Empty("training inputs"));
        }
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for (j, role) in roles.iter().enumerate() {
            if !role.is_continuous() {
                means.push(0.0);
                scales.push(1.0);
                continue;
            }
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            means.push(mean);
            scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Ok(Self { means, scales })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            means: alloc::vec![0.0; d],
            scales: alloc::vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.means.len(), x.ncols())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.scales[j]))
    }
}
