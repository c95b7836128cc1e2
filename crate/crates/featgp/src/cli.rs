//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::Parser;
use featgp_core::Method;

use crate::benchmark::cmd_benchmark;
use crate::commands::{cmd_fit, cmd_importance, cmd_path, cmd_predict};
use crate::config::{RunConfig, Subcommand};
use crate::error::{CliError, Result};

/// Fit featurized Gaussian-process models on CSV data, score variable
/// importance, and run synthetic benchmark grids.
#[derive(Debug, Parser)]
#[command(name = "featgp", version)]
pub struct Cli {
    /// Subcommand; may instead be set as `subcommand` in the config file.
    #[arg(value_enum)]
    pub subcommand: Option<Subcommand>,

    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Target column of the training data.
    #[arg(long)]
    pub target: Option<String>,

    /// fdt_forest, rfnn, additive_basis or ensemble.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,

    /// Model bundle; defaults to model.json in the output directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: featgp_core::Error| e.to_string())
}

impl Cli {
    /// The config file with command-line values laid over it.
    pub fn resolve(&self) -> Result<(Subcommand, RunConfig)> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let subcommand = match (self.subcommand, config.subcommand) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Usage(format!(
                    "subcommand `{}` conflicts with `{}` in the config",
                    name(a),
                    name(b)
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(CliError::Usage("no subcommand given".into())),
        };
        config.subcommand = Some(subcommand);
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        macro_rules! overlay {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    config.$field = Some(v.clone());
                }
            )*};
        }
        overlay!(output, data, target, method, model);
        config.validate()?;
        Ok((subcommand, config))
    }
}

fn name(s: Subcommand) -> &'static str {
    match s {
        Subcommand::Fit => "fit",
        Subcommand::Importance => "importance",
        Subcommand::Path => "path",
        Subcommand::Predict => "predict",
        Subcommand::Benchmark => "benchmark",
    }
}

/// Runs one subcommand and returns the lines to print.
pub fn execute(subcommand: Subcommand, config: &RunConfig) -> Result<Vec<String>> {
    let output = config.output_dir();
    let wrote = |p: &std::path::Path| format!("wrote {}", p.display());
    Ok(match subcommand {
        Subcommand::Fit => {
            let report = cmd_fit(config)?;
            vec![report.diagnostics, wrote(&report.path)]
        }
        Subcommand::Importance => cmd_importance(config, &output)?.iter().map(|p| wrote(p)).collect(),
        Subcommand::Path => vec![wrote(&cmd_path(config, &output)?)],
        Subcommand::Predict => vec![wrote(&cmd_predict(config, &output)?)],
        Subcommand::Benchmark => {
            let s = cmd_benchmark(config, &output)?;
            vec![format!(
                "cells={} skipped={} completed={} failed={} output={}",
                s.cells,
                s.skipped,
                s.completed,
                s.failed,
                output.display()
            )]
        }
    })
}

/// Resolves the configuration, sets up the thread pool and runs.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let (subcommand, config) = cli.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| execute(subcommand, &config))
}
