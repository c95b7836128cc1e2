//! End-to-end model pipelines: build a feature map, fit the weight
//! posterior, and score variables.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchgen::{self, auroc, mean_squared_error, SyntheticSpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::feature_maps::{
    feature_matrix, AdditiveBasisMap, AnyMap, ConcatenatedMap, FeatureMap, RandomFourierMap, TreeMode, VariableRole,
    DEFAULT_INTERIOR_KNOTS,
};
use crate::importance::exact_means;
use crate::posterior::{predict_marginal, NoiseStats, PosteriorAccumulator, PosteriorMode, WeightPosterior, NOISE_FLOOR};
use crate::rng::derive_seed;
use crate::standardize::Standardizer;
use crate::tree_learner::{default_max_leaf_nodes, fit_forest, ForestModel, SplitCandidates, TreeConfig};

/// Lengthscale candidates for random Fourier features.
pub const DEFAULT_LENGTHSCALES: [f64; 4] = [5.0, 10.0, 16.0, 23.0];
pub const DEFAULT_TREES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FdtForest,
    Rfnn,
    AdditiveBasis,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::FdtForest, Method::Rfnn, Method::AdditiveBasis, Method::Ensemble];

    pub fn name(self) -> &'static str {
        match self {
            Method::FdtForest => "fdt_forest",
            Method::Rfnn => "rfnn",
            Method::AdditiveBasis => "additive_basis",
            Method::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown method `{s}`")))
    }
}

/// Hyperparameters shared by all pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub n_trees: usize,
    /// Defaults to `ceil(√n · ln n)`.
    pub max_leaf_nodes: Option<usize>,
    pub split_candidates: SplitCandidates,
    /// Defaults to `ceil(√n · ln n)`.
    pub rff_dim: Option<usize>,
    /// One value is used as is; several are chosen between by log marginal
    /// likelihood.
    pub lengthscales: Vec<f64>,
    pub smooth_c_continuous: f64,
    pub smooth_c_discrete: f64,
    /// Estimated from the data when absent.
    pub noise_variance: Option<f64>,
    pub interior_knots: usize,
    /// Rows per minibatch; the whole data set when absent.
    pub batch_size: Option<usize>,
    pub posterior_mode: PosteriorMode,
    /// Prior center for the additive basis weights.
    pub additive_prior_center: Option<Vec<f64>>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            max_leaf_nodes: None,
            split_candidates: SplitCandidates::PerFeature,
            rff_dim: None,
            lengthscales: DEFAULT_LENGTHSCALES.to_vec(),
            smooth_c_continuous: 1.0,
            smooth_c_discrete: 0.1,
            noise_variance: None,
            interior_knots: DEFAULT_INTERIOR_KNOTS,
            batch_size: None,
            posterior_mode: PosteriorMode::Precision,
            additive_prior_center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub d: usize,
    /// Total feature count `D`.
    pub features: usize,
    pub noise_variance: f64,
    /// Sum over independently fit blocks.
    pub log_marginal: Option<f64>,
    pub max_leaf_nodes: Option<usize>,
    pub rff_dim: Option<usize>,
    pub lengthscale: Option<f64>,
    pub train_mse: f64,
}

/// A feature map with its weight posterior.
///
/// Tree members of `map` are stored in hard mode, the form the posterior
/// was fit in; [`FittedModel::importance_map`] returns the smoothed form
/// used for derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub method: Method,
    pub map: AnyMap,
    pub posterior: WeightPosterior,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    pub fn importance_map(&self) -> AnyMap {
        self.map.clone().with_tree_mode(TreeMode::Soft)
    }

    /// Posterior predictive mean and variance of `f` at the rows of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let phi = feature_matrix(&self.map, x)?;
        let (mean, var) = predict_marginal(&self.posterior, &phi)?;
        Ok((mean.iter().copied().collect(), var.iter().map(|v| v.max(0.0)).collect()))
    }

    /// Exact posterior means of `ψ_j` over the rows of `x`.
    pub fn importance_means(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        exact_means(&self.importance_map(), &self.posterior, x)
    }
}

fn batches(n: usize, batch_size: Option<usize>) -> impl Iterator<Item = (usize, usize)> {
    let size = batch_size.unwrap_or(n).max(1);
    (0..n).step_by(size).map(move |start| (start, size.min(n - start)))
}

fn resolve_noise<M: FeatureMap + ?Sized>(
    map: &M,
    x: &DMatrix<f64>,
    y: &[f64],
    prior_mean: Option<&[f64]>,
    config: &MethodConfig,
) -> Result<f64> {
    if let Some(s2) = config.noise_variance {
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(invalid("noise variance must be positive and finite"));
        }
        return Ok(s2);
    }
    let mut stats = NoiseStats::new(map.output_dim());
    for (start, len) in batches(x.nrows(), config.batch_size) {
        let phi = feature_matrix(map, &x.rows(start, len).into_owned())?;
        stats.accumulate(&phi, &y[start..start + len])?;
    }
    stats.estimate(prior_mean)
}

/// Streams the rows of `x` through a posterior accumulator.
pub fn fit_weights<M: FeatureMap + ?Sized>(
    map: &M,
    x: &DMatrix<f64>,
    y: &[f64],
    noise_variance: f64,
    prior_mean: Option<&[f64]>,
    config: &MethodConfig,
) -> Result<WeightPosterior> {
    check_dim(x.nrows(), y.len())?;
    let mu = match prior_mean {
        Some(m) => {
            check_dim(map.output_dim(), m.len())?;
            DVector::from_column_slice(m)
        }
        None => DVector::zeros(map.output_dim()),
    };
    let mut acc = PosteriorAccumulator::with_prior_mean(mu, noise_variance, config.posterior_mode)?;
    for (start, len) in batches(x.nrows(), config.batch_size) {
        let phi = feature_matrix(map, &x.rows(start, len).into_owned())?;
        acc.accumulate_batch(&phi, &y[start..start + len])?;
    }
    acc.finalize()
}

struct Block {
    map: AnyMap,
    posterior: WeightPosterior,
}

fn fit_block(map: AnyMap, x: &DMatrix<f64>, y: &[f64], prior: Option<&[f64]>, config: &MethodConfig) -> Result<Block> {
    let s2 = resolve_noise(&map, x, y, prior, config)?;
    let posterior = fit_weights(&map, x, y, s2, prior, config)?;
    Ok(Block { map, posterior })
}

fn forest_block(forest: &ForestModel, x: &DMatrix<f64>, y: &[f64], roles: &[VariableRole], config: &MethodConfig) -> Result<Block> {
    let concat = forest.feature_map(roles, config.smooth_c_continuous, config.smooth_c_discrete)?;
    let mut parts = Vec::with_capacity(concat.len());
    let mut log_marginal = 0.0;
    for m in 0..concat.len() {
        let block = fit_block(concat.member(m).1.clone(), x, y, None, config)?;
        log_marginal += block.posterior.log_marginal.unwrap_or(0.0);
        parts.push(block.posterior);
    }
    let mut posterior = WeightPosterior::stack(parts)?;
    posterior.log_marginal = Some(log_marginal);
    Ok(Block {
        map: concat.into(),
        posterior,
    })
}

fn rff_block(x: &DMatrix<f64>, y: &[f64], roles: &[VariableRole], dim: usize, config: &MethodConfig, seed: u64) -> Result<(Block, f64)> {
    if config.lengthscales.is_empty() {
        return Err(invalid("at least one lengthscale is required"));
    }
    let mut best: Option<(Block, f64, f64)> = None;
    for &ell in &config.lengthscales {
        let map = RandomFourierMap::with_seed(x.ncols(), dim, ell, seed)?.with_roles(roles.to_vec())?;
        let block = fit_block(map.into(), x, y, None, config)?;
        let score = block.posterior.log_marginal.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
            best = Some((block, ell, score));
        }
    }
    let (block, ell, _) = best.expect("grid is non-empty");
    Ok((block, ell))
}

fn additive_block(x: &DMatrix<f64>, y: &[f64], roles: &[VariableRole], config: &MethodConfig) -> Result<Block> {
    let mut map = AdditiveBasisMap::fit(x, roles.to_vec(), config.interior_knots)?;
    if let Some(center) = &config.additive_prior_center {
        map = map.with_prior_center(center.clone())?;
    }
    let prior = map.prior_center().map(|p| p.to_vec());
    fit_block(map.into(), x, y, prior.as_deref(), config)
}

/// Fits `method` on `x` (`n × d`, already standardized) and `y`.
pub fn fit_method(
    method: Method,
    x: &DMatrix<f64>,
    y: &[f64],
    roles: &[VariableRole],
    config: &MethodConfig,
    seed: u64,
) -> Result<FittedModel> {
    check_dim(x.nrows(), y.len())?;
    check_dim(roles.len(), x.ncols())?;
    if x.nrows() < 2 {
        return Err(invalid("fitting needs at least two rows"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let n = x.nrows();
    let leaves = config.max_leaf_nodes.unwrap_or_else(|| default_max_leaf_nodes(n));
    let rff_dim = config.rff_dim.unwrap_or_else(|| default_max_leaf_nodes(n));
    let tree_config = TreeConfig {
        max_leaf_nodes: leaves,
        candidates: config.split_candidates,
    };
    let forest_seed = derive_seed(seed, 0);
    let rff_seed = derive_seed(seed, 1);
    let (block, max_leaf_nodes, rff, lengthscale) = match method {
        Method::FdtForest => {
            let forest = fit_forest(x, y, config.n_trees, &tree_config, forest_seed)?;
            (forest_block(&forest, x, y, roles, config)?, Some(leaves), None, None)
        }
        Method::Rfnn => {
            let (block, ell) = rff_block(x, y, roles, rff_dim, config, rff_seed)?;
            (block, None, Some(rff_dim), Some(ell))
        }
        Method::AdditiveBasis => (additive_block(x, y, roles, config)?, None, None, None),
        Method::Ensemble => {
            let forest = fit_forest(x, y, config.n_trees, &tree_config, forest_seed)?;
            let trees = forest_block(&forest, x, y, roles, config)?;
            let (rff_part, ell) = rff_block(x, y, roles, rff_dim, config, rff_seed)?;
            let additive = additive_block(x, y, roles, config)?;
            let blocks = [trees, rff_part, additive];
            let log_marginal = blocks.iter().map(|b| b.posterior.log_marginal.unwrap_or(0.0)).sum();
            let map = ConcatenatedMap::uniform(blocks.iter().map(|b| b.map.clone()).collect())?;
            let mut posterior = WeightPosterior::stack(blocks.into_iter().map(|b| b.posterior).collect())?;
            posterior.log_marginal = Some(log_marginal);
            (
                Block {
                    map: map.into(),
                    posterior,
                },
                Some(leaves),
                Some(rff_dim),
                Some(ell),
            )
        }
    };
    let mut model = FittedModel {
        method,
        diagnostics: FitDiagnostics {
            n,
            d: x.ncols(),
            features: block.map.output_dim(),
            noise_variance: block.posterior.noise_variance,
            log_marginal: block.posterior.log_marginal,
            max_leaf_nodes,
            rff_dim: rff,
            lengthscale,
            train_mse: 0.0,
        },
        map: block.map,
        posterior: block.posterior,
    };
    let (fitted, _) = model.predict(x)?;
    model.diagnostics.train_mse = mean_squared_error(&fitted, y)?;
    Ok(model)
}

/// How the random-feature lengthscale is picked in a benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LengthscaleSelection {
    /// Lowest test-set error, as in the reference protocol.
    TestMse,
    /// Lowest error on the last `fraction` of the training rows; the chosen
    /// value is then refit on all training rows.
    Validation { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseTarget {
    Noiseless,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub method: MethodConfig,
    pub selection: LengthscaleSelection,
    pub mse_target: MseTarget,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            method: MethodConfig::default(),
            selection: LengthscaleSelection::TestMse,
            mse_target: MseTarget::Noiseless,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub auroc: f64,
    pub test_mse: f64,
    pub lengthscale: Option<f64>,
    pub importance: Vec<f64>,
}

fn with_lengthscale(config: &MethodConfig, ell: f64) -> MethodConfig {
    MethodConfig {
        lengthscales: vec![ell],
        ..config.clone()
    }
}

/// Generates one benchmark problem, fits `method`, and scores it.
///
/// Continuous columns are standardized with training statistics. The noise
/// variance defaults to the generator's value.
pub fn run_scenario(spec: &SyntheticSpec, method: Method, options: &BenchmarkOptions) -> Result<ScenarioOutcome> {
    let data = benchgen::generate(spec)?;
    let scaler = Standardizer::fit(&data.x_train, &data.roles)?;
    let x_train = scaler.apply(&data.x_train)?;
    let x_test = scaler.apply(&data.x_test)?;
    let mut config = options.method.clone();
    if config.noise_variance.is_none() {
        config.noise_variance = Some(spec.noise_variance.max(NOISE_FLOOR));
    }
    let target = match options.mse_target {
        MseTarget::Noiseless => &data.f_test,
        MseTarget::Noisy => &data.y_test,
    };
    let seed = derive_seed(spec.seed, 3);
    let uses_rff = matches!(method, Method::Rfnn | Method::Ensemble);
    let model = if uses_rff && config.lengthscales.len() > 1 {
        let mut best: Option<(f64, f64)> = None;
        for &ell in &config.lengthscales {
            let single = with_lengthscale(&config, ell);
            let score = match options.selection {
                LengthscaleSelection::TestMse => {
                    let model = fit_method(method, &x_train, &data.y_train, &data.roles, &single, seed)?;
                    mean_squared_error(&model.predict(&x_test)?.0, target)?
                }
                LengthscaleSelection::Validation { fraction } => {
                    let n = x_train.nrows();
                    let held = libm::ceil(n as f64 * fraction.clamp(0.0, 1.0)) as usize;
                    let held = held.clamp(1, n.saturating_sub(2).max(1));
                    let fit_rows = n - held;
                    let model = fit_method(
                        method,
                        &x_train.rows(0, fit_rows).into_owned(),
                        &data.y_train[..fit_rows],
                        &data.roles,
                        &single,
                        seed,
                    )?;
                    let pred = model.predict(&x_train.rows(fit_rows, held).into_owned())?.0;
                    mean_squared_error(&pred, &data.y_train[fit_rows..])?
                }
            };
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((ell, score));
            }
        }
        let (ell, _) = best.expect("grid is non-empty");
        fit_method(method, &x_train, &data.y_train, &data.roles, &with_lengthscale(&config, ell), seed)?
    } else {
        fit_method(method, &x_train, &data.y_train, &data.roles, &config, seed)?
    };
    let importance = model.importance_means(&x_train)?;
    let test_mse = mean_squared_error(&model.predict(&x_test)?.0, target)?;
    Ok(ScenarioOutcome {
        auroc: auroc(&importance, &data.causal)?,
        test_mse,
        lengthscale: model.diagnostics.lengthscale,
        importance,
    })
}

/// Human-readable one-line fit summary.
pub fn diagnostics_line(d: &FitDiagnostics) -> String {
    let mut line = alloc::format!(
        "D={} n={} d={} sigma2={:.6e} log_marginal={}",
        d.features,
        d.n,
        d.d,
        d.noise_variance,
        d.log_marginal.map_or_else(|| String::from("na"), |v| alloc::format!("{v:.6}")),
    );
    if let Some(l) = d.max_leaf_nodes {
        line.push_str(&alloc::format!(" max_leaf_nodes={l}"));
    }
    if let Some(r) = d.rff_dim {
        line.push_str(&alloc::format!(" rff_dim={r}"));
    }
    if let Some(l) = d.lengthscale {
        line.push_str(&alloc::format!(" lengthscale={l}"));
    }
    line.push_str(&alloc::format!(" train_mse={:.6e}", d.train_mse));
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{FeatureKind, OutcomeKind};

    fn small(method: Method, f0: OutcomeKind, features: FeatureKind, n: usize) -> ScenarioOutcome {
        let spec = SyntheticSpec::new(f0, features, n, 8, 3);
        let options = BenchmarkOptions {
            method: MethodConfig {
                n_trees: 5,
                ..MethodConfig::default()
            },
            ..BenchmarkOptions::default()
        };
        run_scenario(&spec, method, &options).unwrap()
    }

    #[test]
    fn every_method_runs_end_to_end() {
        for method in Method::ALL {
            let out = small(method, OutcomeKind::Linear, FeatureKind::Mixture, 80);
            assert!((0.0..=1.0).contains(&out.auroc), "{method}");
            assert!(out.test_mse.is_finite() && out.test_mse >= 0.0);
            assert_eq!(out.importance.len(), 8);
        }
    }

    #[test]
    fn additive_basis_separates_linear_signal() {
        let out = small(Method::AdditiveBasis, OutcomeKind::Linear, FeatureKind::Continuous, 400);
        assert!(out.auroc >= 0.9, "{}", out.auroc);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bart".parse::<Method>().is_err());
    }

    #[test]
    fn forest_diagnostics_report_leaf_budget() {
        let spec = SyntheticSpec::new(OutcomeKind::Linear, FeatureKind::Continuous, 500, 6, 0);
        let data = benchgen::generate(&spec).unwrap();
        let config = MethodConfig {
            n_trees: 2,
            noise_variance: Some(0.01),
            ..MethodConfig::default()
        };
        let model = fit_method(Method::FdtForest, &data.x_train, &data.y_train, &data.roles, &config, 0).unwrap();
        assert_eq!(model.diagnostics.max_leaf_nodes, Some(139));
        assert!(diagnostics_line(&model.diagnostics).contains("max_leaf_nodes=139"));
    }
}
