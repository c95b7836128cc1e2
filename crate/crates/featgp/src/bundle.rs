//! The persisted result of `fit`.

use std::fs;
use std::path::Path;

use featgp_core::standardize::Standardizer;
use featgp_core::{FittedModel, MethodConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::schema::Schema;
use crate::table::{write_atomic, Table};

pub const BUNDLE_FORMAT: &str = "featgp-model/1";

/// Schema, standardization statistics and fitted model, stored as JSON.
///
/// Standardization is fit-time state: later commands apply these statistics
/// and never recompute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub schema: Schema,
    pub standardizer: Standardizer,
    pub seed: u64,
    pub config: MethodConfig,
    pub model: FittedModel,
}

impl ModelBundle {
    pub fn new(schema: Schema, standardizer: Standardizer, seed: u64, config: MethodConfig, model: FittedModel) -> Self {
        Self {
            format: BUNDLE_FORMAT.to_owned(),
            schema,
            standardizer,
            seed,
            config,
            model,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("bundle serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let bundle: Self = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("{}: not a model bundle: {e}", path.display())))?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(CliError::Data(format!(
                "{}: unsupported bundle format `{}`",
                path.display(),
                bundle.format
            )));
        }
        Ok(bundle)
    }

    /// Standardized features of `table` in model column order.
    pub fn inputs(&self, table: &Table) -> Result<DMatrix<f64>> {
        let (x, _) = self.schema.encode(table, false)?;
        Ok(self.standardizer.apply(&x)?)
    }

    /// Posterior predictive mean and standard deviation of `f`.
    pub fn predict(&self, table: &Table) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, var) = self.model.predict(&self.inputs(table)?)?;
        Ok((mean, var.into_iter().map(|v| v.max(0.0).sqrt()).collect()))
    }
}
