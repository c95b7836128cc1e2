//! The TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use featgp_core::benchgen::{FeatureKind, OutcomeKind};
use featgp_core::methods::{BenchmarkOptions, LengthscaleSelection, MseTarget};
use featgp_core::{Method, MethodConfig, PosteriorMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::schema::SchemaDecl;

pub use featgp_core::importance::{DEFAULT_GRID_POINTS, DEFAULT_SAMPLES as DEFAULT_MC_SAMPLES};
pub const DEFAULT_OUTPUT: &str = "featgp_out";
pub const MODEL_FILE: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Fit,
    Importance,
    Path,
    Predict,
    Benchmark,
}

/// A single lengthscale or a grid to choose from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengthscale {
    One(f64),
    Grid(Vec<f64>),
}

impl Lengthscale {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Lengthscale::One(v) => vec![*v],
            Lengthscale::Grid(v) => v.clone(),
        }
    }
}

/// Everything a run needs. Absent hyperparameters take the method defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<Subcommand>,
    /// Input CSV: training data for `fit`, scoring data for `importance`
    /// and `path`, new rows for `predict`.
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    #[serde(default)]
    pub schema: SchemaDecl,
    pub method: Option<Method>,
    pub n_trees: Option<usize>,
    pub max_leaf_nodes: Option<usize>,
    pub rff_dim: Option<usize>,
    pub lengthscale: Option<Lengthscale>,
    pub smooth_c_continuous: Option<f64>,
    pub smooth_c_discrete: Option<f64>,
    pub noise_variance: Option<f64>,
    pub mc_samples: Option<usize>,
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Model bundle path; defaults to `model.json` in the output directory.
    pub model: Option<PathBuf>,
    pub posterior_mode: Option<PosteriorMode>,
    pub interior_knots: Option<usize>,
    /// Points on each survival grid.
    pub grid_points: Option<usize>,
    /// Also write every posterior draw of ψ from `importance`.
    #[serde(default)]
    pub write_samples: bool,
    pub benchmark: Option<BenchmarkGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    #[default]
    TestMse,
    Validation,
}

/// The scenario grid of a benchmark run: every combination of the listed
/// kinds and sizes, crossed with `methods` and `repeats` seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkGrid {
    pub f0_kinds: Vec<OutcomeKind>,
    pub feature_kinds: Vec<FeatureKind>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub repeats: usize,
    /// Test-set size; defaults to `n`.
    pub n_test: Option<usize>,
    #[serde(default)]
    pub lengthscale_selection: SelectionRule,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Score test MSE against noisy targets instead of the noiseless signal.
    #[serde(default)]
    pub noisy_targets: bool,
    /// Write 0 for wall time so reruns give identical files.
    #[serde(default)]
    pub deterministic: bool,
}

fn one() -> usize {
    1
}

fn default_validation_fraction() -> f64 {
    0.2
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.output_dir().join(MODEL_FILE))
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Usage("no data file given (`data` or --data)".into()))
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES)
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points.unwrap_or(DEFAULT_GRID_POINTS)
    }

    /// Rejects values no method can use.
    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("n_trees", self.n_trees),
            ("rff_dim", self.rff_dim),
            ("mc_samples", self.mc_samples),
            ("batch_size", self.batch_size),
            ("grid_points", self.grid_points),
        ];
        for (name, value) in positive_counts {
            if value == Some(0) {
                return Err(CliError::Usage(format!("`{name}` must be positive")));
            }
        }
        if self.max_leaf_nodes.is_some_and(|v| v < 2) {
            return Err(CliError::Usage("`max_leaf_nodes` must be at least 2".into()));
        }
        if self.grid_points == Some(1) {
            return Err(CliError::Usage("`grid_points` must be at least 2".into()));
        }
        let positive_reals = [
            ("smooth_c_continuous", self.smooth_c_continuous),
            ("smooth_c_discrete", self.smooth_c_discrete),
            ("noise_variance", self.noise_variance),
        ];
        for (name, value) in positive_reals {
            if value.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(CliError::Usage(format!("`{name}` must be positive and finite")));
            }
        }
        if let Some(ell) = &self.lengthscale {
            let values = ell.values();
            if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(CliError::Usage("`lengthscale` must be positive and finite".into()));
            }
        }
        if let Some(grid) = &self.benchmark {
            grid.validate()?;
        }
        Ok(())
    }

    /// Method hyperparameters with defaults filled in.
    pub fn method_config(&self) -> MethodConfig {
        let mut c = MethodConfig::default();
        if let Some(v) = self.n_trees {
            c.n_trees = v;
        }
        c.max_leaf_nodes = self.max_leaf_nodes.or(c.max_leaf_nodes);
        c.rff_dim = self.rff_dim.or(c.rff_dim);
        if let Some(ell) = &self.lengthscale {
            c.lengthscales = ell.values();
        }
        if let Some(v) = self.smooth_c_continuous {
            c.smooth_c_continuous = v;
        }
        if let Some(v) = self.smooth_c_discrete {
            c.smooth_c_discrete = v;
        }
        c.noise_variance = self.noise_variance.or(c.noise_variance);
        c.batch_size = self.batch_size.or(c.batch_size);
        if let Some(v) = self.posterior_mode {
            c.posterior_mode = v;
        }
        if let Some(v) = self.interior_knots {
            c.interior_knots = v;
        }
        c
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::FdtForest)
    }
}

impl BenchmarkGrid {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("f0_kinds", self.f0_kinds.is_empty()),
            ("feature_kinds", self.feature_kinds.is_empty()),
            ("n", self.n.is_empty()),
            ("d", self.d.is_empty()),
            ("methods", self.methods.is_empty()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, empty)| *empty) {
            return Err(CliError::Usage(format!("benchmark `{name}` is empty")));
        }
        if self.repeats == 0 {
            return Err(CliError::Usage("benchmark `repeats` must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CliError::Usage("`validation_fraction` must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn options(&self, method: MethodConfig) -> BenchmarkOptions {
        BenchmarkOptions {
            method,
            selection: match self.lengthscale_selection {
                SelectionRule::TestMse => LengthscaleSelection::TestMse,
                SelectionRule::Validation => LengthscaleSelection::Validation {
                    fraction: self.validation_fraction,
                },
            },
            mse_target: if self.noisy_targets {
                MseTarget::Noisy
            } else {
                MseTarget::Noiseless
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let text = r#"
subcommand = "fit"
data = "train.csv"
target = "y"
method = "rfnn"
n_trees = 10
max_leaf_nodes = 20
rff_dim = 64
lengthscale = [1.0, 2.0]
smooth_c_continuous = 1.0
smooth_c_discrete = 0.1
noise_variance = 0.05
mc_samples = 500
batch_size = 32
seed = 9
output = "out"

[schema]
sex = "binary"
site = { categorical = ["a", "b"] }

[benchmark]
f0_kinds = ["matern32"]
feature_kinds = ["mixture"]
n = [100]
d = [10]
methods = ["fdt_forest"]
"#;
        let c = RunConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.subcommand, Some(Subcommand::Fit));
        assert_eq!(c.method(), Method::Rfnn);
        let m = c.method_config();
        assert_eq!(m.lengthscales, [1.0, 2.0]);
        assert_eq!(m.rff_dim, Some(64));
        assert_eq!(m.batch_size, Some(32));
        assert_eq!(c.model_path(), Path::new("out").join(MODEL_FILE));
        assert_eq!(c.benchmark.unwrap().repeats, 1);
    }

    #[test]
    fn scalar_lengthscale_and_defaults() {
        let c = RunConfig::from_toml("lengthscale = 3.0").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.method_config().lengthscales, [3.0]);
        assert_eq!(c.method_config(), MethodConfig { lengthscales: vec![3.0], ..MethodConfig::default() });
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        assert!(matches!(RunConfig::from_toml("n_tree = 3"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_toml("method = \"svm\""), Err(CliError::Usage(_))));
        for text in ["mc_samples = 0", "noise_variance = -1.0", "lengthscale = []", "max_leaf_nodes = 1"] {
            let c = RunConfig::from_toml(text).unwrap();
            assert!(matches!(c.validate(), Err(CliError::Usage(_))), "{text}");
        }
    }
}
