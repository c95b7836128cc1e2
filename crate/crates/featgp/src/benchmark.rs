//! Benchmark grids over synthetic scenarios.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use featgp_core::benchgen::{SyntheticSpec, CAUSAL_VARIABLES, MIXTURE_BINARY_COLUMNS};
use featgp_core::methods::{run_scenario, BenchmarkOptions};
use featgp_core::Method;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BenchmarkGrid, RunConfig};
use crate::error::{CliError, Result};
use crate::table::{to_csv, write_atomic, Table};

pub const RESULT_COLUMNS: [&str; 9] = [
    "f0_kind",
    "feature_kind",
    "n",
    "d",
    "method",
    "seed",
    "auroc",
    "test_mse",
    "wall_time_s",
];
pub const FAILURE_COLUMNS: [&str; 7] = ["f0_kind", "feature_kind", "n", "d", "method", "seed", "reason"];
pub const RESULTS_FILE: &str = "results.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const METADATA_FILE: &str = "results.meta.json";

/// One (scenario, method, seed) job.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub spec: SyntheticSpec,
    pub method: Method,
}

impl Cell {
    /// The identifying columns of the results file.
    pub fn key(&self) -> Vec<String> {
        vec![
            self.spec.f0_kind.name().to_owned(),
            self.spec.feature_kind.name().to_owned(),
            self.spec.n.to_string(),
            self.spec.d.to_string(),
            self.method.name().to_owned(),
            self.spec.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub auroc: f64,
    pub test_mse: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: std::result::Result<BenchResult, String>,
}

impl CellOutcome {
    fn row(&self) -> Option<Vec<String>> {
        let r = self.result.as_ref().ok()?;
        let mut row = self.cell.key();
        row.extend([r.auroc.to_string(), r.test_mse.to_string(), r.wall_time_s.to_string()]);
        Some(row)
    }
}

/// All jobs in the deterministic order scenario, method, repeat. Repeat `r`
/// of a scenario whose spec carries seed `s` uses seed `s + r`.
pub fn expand_cells(grid: &[SyntheticSpec], methods: &[Method], repeats: usize) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(grid.len() * methods.len() * repeats);
    for spec in grid {
        for &method in methods {
            for r in 0..repeats as u64 {
                cells.push(Cell {
                    spec: SyntheticSpec {
                        seed: spec.seed.wrapping_add(r),
                        ..spec.clone()
                    },
                    method,
                });
            }
        }
    }
    cells
}

pub fn run_cell(cell: &Cell, options: &BenchmarkOptions, deterministic: bool) -> CellOutcome {
    let start = Instant::now();
    let result = run_scenario(&cell.spec, cell.method, options)
        .map(|o| BenchResult {
            auroc: o.auroc,
            test_mse: o.test_mse,
            wall_time_s: if deterministic { 0.0 } else { start.elapsed().as_secs_f64() },
        })
        .map_err(|e| e.to_string());
    CellOutcome {
        cell: cell.clone(),
        result,
    }
}

/// Runs every scenario × method × repeat in parallel and returns outcomes
/// in grid order. Failures are returned with their reason and never stop
/// the grid.
pub fn run_benchmark(
    grid: &[SyntheticSpec],
    methods: &[Method],
    repeats: usize,
    options: &BenchmarkOptions,
    deterministic: bool,
) -> Vec<CellOutcome> {
    expand_cells(grid, methods, repeats)
        .par_iter()
        .map(|cell| run_cell(cell, options, deterministic))
        .collect()
}

/// Scenario specs of a configured grid, in declaration order.
pub fn grid_specs(grid: &BenchmarkGrid, seed: u64) -> Vec<SyntheticSpec> {
    let mut specs = Vec::new();
    for &f0 in &grid.f0_kinds {
        for &features in &grid.feature_kinds {
            for &n in &grid.n {
                for &d in &grid.d {
                    specs.push(SyntheticSpec {
                        n_test: grid.n_test,
                        ..SyntheticSpec::new(f0, features, n, d, seed)
                    });
                }
            }
        }
    }
    specs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkSummary {
    pub cells: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
}

/// Rows already in `path`, keyed by their identifying columns.
fn existing_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let table = Table::read(path)?;
    if table.headers != RESULT_COLUMNS {
        return Err(CliError::Data(format!(
            "{}: header does not match the results layout",
            path.display()
        )));
    }
    Ok(table.rows)
}

/// Rows for grid cells in grid order, then rows for keys outside the grid in
/// file order.
fn ordered_rows(cells: &[Cell], rows: &HashMap<Vec<String>, Vec<String>>, foreign: &[Vec<String>]) -> Vec<Vec<String>> {
    cells
        .iter()
        .filter_map(|c| rows.get(&c.key()).cloned())
        .chain(foreign.iter().cloned())
        .collect()
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: &'static str,
    config: &'a RunConfig,
    seeds: Vec<u64>,
    mixture_binary_columns: [usize; 4],
    /// The first this many columns are causal.
    causal_variables: usize,
    cells: usize,
}

/// Runs a configured grid, resuming from `output/results.csv` when present.
///
/// Cells whose key already has a row are skipped. The results file is
/// rewritten atomically after each finished cell, so an interrupted run
/// leaves a valid file to resume from. Failed cells go to `failures.csv`
/// and are retried by the next run.
pub fn cmd_benchmark(config: &RunConfig, output: &Path) -> Result<BenchmarkSummary> {
    let grid = config
        .benchmark
        .as_ref()
        .ok_or_else(|| CliError::Usage("benchmark needs a [benchmark] grid in the config".into()))?;
    let options = grid.options(config.method_config());
    let specs = grid_specs(grid, config.seed);
    for spec in &specs {
        spec.validate().map_err(CliError::from)?;
    }
    let cells = expand_cells(&specs, &grid.methods, grid.repeats);

    let results_path = output.join(RESULTS_FILE);
    let keys: std::collections::HashSet<Vec<String>> = cells.iter().map(Cell::key).collect();
    let mut done = HashMap::new();
    let mut foreign = Vec::new();
    for row in existing_rows(&results_path)? {
        let key = row[..6].to_vec();
        if keys.contains(&key) {
            done.insert(key, row);
        } else {
            foreign.push(row);
        }
    }
    let skipped = done.len();

    let seeds: Vec<u64> = (0..grid.repeats as u64).map(|r| config.seed.wrapping_add(r)).collect();
    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        config,
        seeds,
        mixture_binary_columns: MIXTURE_BINARY_COLUMNS,
        causal_variables: CAUSAL_VARIABLES,
        cells: cells.len(),
    };
    let mut meta = serde_json::to_vec_pretty(&metadata).expect("metadata serializes");
    meta.push(b'\n');
    write_atomic(&output.join(METADATA_FILE), &meta)?;

    let pending: Vec<&Cell> = cells.iter().filter(|c| !done.contains_key(&c.key())).collect();
    let state = Mutex::new(done);
    let outcomes: Vec<CellOutcome> = pending
        .par_iter()
        .map(|cell| {
            let outcome = run_cell(cell, &options, grid.deterministic);
            if let Some(row) = outcome.row() {
                let mut rows = state.lock().expect("results lock");
                rows.insert(cell.key(), row);
                write_atomic(&results_path, &to_csv(&RESULT_COLUMNS, ordered_rows(&cells, &rows, &foreign)))?;
            }
            Ok(outcome)
        })
        .collect::<Result<_>>()?;

    let rows = state.into_inner().expect("results lock");
    write_atomic(&results_path, &to_csv(&RESULT_COLUMNS, ordered_rows(&cells, &rows, &foreign)))?;
    let failures: Vec<Vec<String>> = outcomes
        .iter()
        .filter_map(|o| {
            let reason = o.result.as_ref().err()?;
            let mut row = o.cell.key();
            row.push(reason.clone());
            Some(row)
        })
        .collect();
    let failures_path = output.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| CliError::io(&failures_path, e))?;
        }
    } else {
        write_atomic(&failures_path, &to_csv(&FAILURE_COLUMNS, failures.iter().cloned()))?;
    }
    Ok(BenchmarkSummary {
        cells: cells.len(),
        skipped,
        completed: outcomes.len() - failures.len(),
        failed: failures.len(),
    })
}
