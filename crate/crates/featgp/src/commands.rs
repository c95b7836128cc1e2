//! The `fit`, `importance`, `path` and `predict` subcommands.

use std::path::{Path, PathBuf};

use featgp_core::importance::{
    rank_variables, selection_path, summarize_law, GridSpec, ImportanceSummary, PsiLaw, SummaryConfig,
    DEFAULT_GRID_QUANTILE,
};
use featgp_core::methods::diagnostics_line;
use featgp_core::standardize::Standardizer;
use featgp_core::fit_method;
use rayon::prelude::*;

use crate::bundle::ModelBundle;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::schema::Schema;
use crate::table::{to_csv, write_atomic, Table};

pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const SURVIVAL_FILE: &str = "survival.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const PATH_FILE: &str = "path.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

pub struct FitReport {
    pub bundle: ModelBundle,
    pub path: PathBuf,
    pub diagnostics: String,
}

/// Fits the configured method on the data file and writes the bundle.
pub fn cmd_fit(config: &RunConfig) -> Result<FitReport> {
    let target = config
        .target
        .as_deref()
        .ok_or_else(|| CliError::Usage("no target column given (`target` or --target)".into()))?;
    let table = Table::read(config.data_path()?)?;
    let schema = Schema::resolve(&table.headers, target, &config.schema)?;
    let (x, y) = schema.encode(&table, true)?;
    let y = y.expect("target requested");
    let roles = schema.roles();
    let standardizer = Standardizer::fit(&x, &roles)?;
    let xs = standardizer.apply(&x)?;
    let method_config = config.method_config();
    let model = fit_method(config.method(), &xs, &y, &roles, &method_config, config.seed)?;
    let diagnostics = diagnostics_line(&model.diagnostics);
    let bundle = ModelBundle::new(schema, standardizer, config.seed, method_config, model);
    let path = config.model_path();
    bundle.save(&path)?;
    Ok(FitReport {
        bundle,
        path,
        diagnostics,
    })
}

/// Loads the bundle and the standardized scoring inputs.
fn load_inputs(config: &RunConfig) -> Result<(ModelBundle, nalgebra::DMatrix<f64>)> {
    let bundle = ModelBundle::load(&config.model_path())?;
    if let Some(target) = &config.target {
        if *target != bundle.schema.target {
            return Err(CliError::Data(format!(
                "schema drift: target `{target}` differs from the fitted target `{}`",
                bundle.schema.target
            )));
        }
    }
    bundle.schema.check_decl(&config.schema)?;
    let table = Table::read(config.data_path()?)?;
    let x = bundle.inputs(&table)?;
    Ok((bundle, x))
}

/// Posterior summaries of every variable's ψ on the scoring data.
///
/// Variables are processed in parallel; each draws from its own stream, so
/// the result does not depend on the thread count.
pub fn importance_summary(
    bundle: &ModelBundle,
    x: &nalgebra::DMatrix<f64>,
    summary: &SummaryConfig,
    seed: u64,
) -> Result<ImportanceSummary> {
    let map = bundle.model.importance_map();
    let post = &bundle.model.posterior;
    let variables = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let law = PsiLaw::for_variable(&map, post, x, j)?;
            summarize_law(&law, summary, seed)
        })
        .collect::<featgp_core::Result<Vec<_>>>()?;
    Ok(rank_variables(variables)?)
}

fn summary_config(config: &RunConfig, keep_samples: bool) -> SummaryConfig {
    SummaryConfig {
        samples: config.mc_samples(),
        keep_samples,
        grid: GridSpec::Auto {
            points: config.grid_points(),
            upper_quantile: DEFAULT_GRID_QUANTILE,
        },
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Writes `importance.csv`, `survival.csv` and, when requested,
/// `samples.csv`. Returns the paths written.
pub fn cmd_importance(config: &RunConfig, output: &Path) -> Result<Vec<PathBuf>> {
    let (bundle, x) = load_inputs(config)?;
    let summary = importance_summary(&bundle, &x, &summary_config(config, config.write_samples), config.seed)?;
    let names = bundle.schema.feature_names();
    let rows = summary.variables.iter().map(|v| {
        vec![
            names[v.variable].to_owned(),
            num(v.mean),
            num(v.sd()),
            num(v.q05),
            num(v.q50),
            num(v.q95),
            v.rank.to_string(),
            num(v.normalized_mean),
        ]
    });
    let importance = to_csv(
        &["feature", "psi_mean", "psi_sd", "q05", "q50", "q95", "rank", "normalized_mean"],
        rows,
    );
    let survival = to_csv(
        &["feature", "s", "survival"],
        summary.variables.iter().flat_map(|v| {
            let name = names[v.variable];
            v.survival.iter().map(move |&(s, p)| vec![name.to_owned(), num(s), num(p)])
        }),
    );
    let mut written = vec![output.join(IMPORTANCE_FILE), output.join(SURVIVAL_FILE)];
    write_atomic(&written[0], &importance)?;
    write_atomic(&written[1], &survival)?;
    if config.write_samples {
        let samples = to_csv(
            &["feature", "draw", "psi"],
            summary.variables.iter().flat_map(|v| {
                let name = names[v.variable];
                v.samples
                    .iter()
                    .flatten()
                    .enumerate()
                    .map(move |(k, &s)| vec![name.to_owned(), k.to_string(), num(s)])
            }),
        );
        let path = output.join(SAMPLES_FILE);
        write_atomic(&path, &samples)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `path.csv`: survival curves of ψ scaled by the largest posterior
/// mean, on one grid shared by all features.
pub fn cmd_path(config: &RunConfig, output: &Path) -> Result<PathBuf> {
    let (bundle, x) = load_inputs(config)?;
    let summary = importance_summary(&bundle, &x, &summary_config(config, true), config.seed)?;
    let curves = selection_path(&summary, config.grid_points())?;
    let names = bundle.schema.feature_names();
    let bytes = to_csv(
        &["feature", "s", "survival"],
        curves.iter().flat_map(|(j, curve)| {
            let name = names[*j];
            curve.iter().map(move |&(s, p)| vec![name.to_owned(), num(s), num(p)])
        }),
    );
    let path = output.join(PATH_FILE);
    write_atomic(&path, &bytes)?;
    Ok(path)
}

/// Writes `predictions.csv` with the posterior mean and standard deviation
/// of `f` for every data row.
pub fn cmd_predict(config: &RunConfig, output: &Path) -> Result<PathBuf> {
    let bundle = ModelBundle::load(&config.model_path())?;
    bundle.schema.check_decl(&config.schema)?;
    let table = Table::read(config.data_path()?)?;
    let (mean, sd) = bundle.predict(&table)?;
    let bytes = to_csv(
        &["mean", "sd"],
        mean.iter().zip(&sd).map(|(m, s)| vec![num(*m), num(*s)]),
    );
    let path = output.join(PREDICTIONS_FILE);
    write_atomic(&path, &bytes)?;
    Ok(path)
}
