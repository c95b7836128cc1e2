//! Synthetic variable-selection benchmark: outcome functions, feature
//! distributions and the AUROC score.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::feature_maps::VariableRole;
use crate::linalg::cholesky_jittered;
use crate::rng::stream;

/// Number of causal variables; they occupy columns `0..5`.
pub const CAUSAL_VARIABLES: usize = 5;
/// Bernoulli columns of the mixture design: two causal, two not.
pub const MIXTURE_BINARY_COLUMNS: [usize; 4] = [0, 1, 5, 6];
/// Diagonal jitter for latent GP draws.
pub const GP_JITTER: f64 = 1e-8;
/// Rows of the complex outcome whose pole denominator is smaller than this
/// are redrawn.
pub const POLE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Linear,
    Rbf,
    Matern32,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Every column `Uniform(−2, 2)`.
    Continuous,
    /// Columns 0, 1, 5, 6 `Bernoulli(0.5)`, the rest `Uniform(−2, 2)`.
    Mixture,
}

impl OutcomeKind {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Linear => "linear",
            OutcomeKind::Rbf => "rbf",
            OutcomeKind::Matern32 => "matern32",
            OutcomeKind::Complex => "complex",
        }
    }
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kernel of a latent GP outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpKernel {
    Rbf,
    Matern32,
}

impl GpKernel {
    /// `k(r)` for Euclidean distance `r`.
    pub fn eval(self, r: f64, lengthscale: f64) -> f64 {
        match self {
            GpKernel::Rbf => libm::exp(-r * r / (2.0 * lengthscale * lengthscale)),
            GpKernel::Matern32 => {
                let t = libm::sqrt(3.0) * r / lengthscale;
                (1.0 + t) * libm::exp(-t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub f0_kind: OutcomeKind,
    pub feature_kind: FeatureKind,
    pub n: usize,
    /// Defaults to `n`.
    #[serde(default)]
    pub n_test: Option<usize>,
    pub d: usize,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.01
}

fn default_lengthscale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(f0_kind: OutcomeKind, feature_kind: FeatureKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            f0_kind,
            feature_kind,
            n,
            n_test: None,
            d,
            noise_variance: default_noise(),
            lengthscale: default_lengthscale(),
            seed,
        }
    }

    pub fn test_size(&self) -> usize {
        self.n_test.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < CAUSAL_VARIABLES {
            return Err(invalid("dimension must be at least the number of causal variables"));
        }
        if self.feature_kind == FeatureKind::Mixture && self.d <= MIXTURE_BINARY_COLUMNS[3] {
            return Err(invalid("mixture features need at least 7 columns"));
        }
        if self.n == 0 || self.test_size() == 0 {
            return Err(invalid("sample sizes must be positive"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid("noise variance must be finite and non-negative"));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(invalid("lengthscale must be positive"));
        }
        Ok(())
    }

    pub fn roles(&self) -> Vec<VariableRole> {
        (0..self.d)
            .map(|j| match self.feature_kind {
                FeatureKind::Mixture if MIXTURE_BINARY_COLUMNS.contains(&j) => VariableRole::Binary,
                _ => VariableRole::Continuous,
            })
            .collect()
    }

    pub fn causal_mask(&self) -> Vec<bool> {
        (0..self.d).map(|j| j < CAUSAL_VARIABLES).collect()
    }
}

/// `x¹ − x² + x³ + 0.5x⁴ + 2x⁵` (one-based variable names).
pub fn f0_linear(x: &[f64]) -> f64 {
    x[0] - x[1] + x[2] + 0.5 * x[3] + 2.0 * x[4]
}

fn complex_denominator(x: &[f64]) -> f64 {
    1.0 + x[0] + x[4]
}

/// The non-smooth benchmark function; rejects points on its pole.
pub fn f0_complex(x: &[f64]) -> Result<f64> {
    let denom = complex_denominator(x);
    if denom == 0.0 {
        return Err(invalid("complex outcome is undefined where 1 + x1 + x5 = 0"));
    }
    let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
    Ok((libm::sin(x1.max(x2)) + libm::atan(x2)) / denom
        + libm::sin(0.5 * x3) * (1.0 + libm::exp(x4 - 0.5 * x3))
        + x3 * x3
        + 2.0 * libm::sin(x4)
        + 4.0 * x5)
}

/// Closed-form outcome for the `linear` and `complex` kinds.
pub fn f0_eval(kind: OutcomeKind, x: &[f64]) -> Result<f64> {
    if x.len() < CAUSAL_VARIABLES {
        return Err(Error::DimensionMismatch {
            expected: CAUSAL_VARIABLES,
            got: x.len(),
        });
    }
    match kind {
        OutcomeKind::Linear => Ok(f0_linear(x)),
        OutcomeKind::Complex => f0_complex(x),
        OutcomeKind::Rbf | OutcomeKind::Matern32 => Err(invalid("GP outcomes are sampled jointly, not evaluated pointwise")),
    }
}

fn draw_row<R: Rng + ?Sized>(kind: FeatureKind, row: &mut [f64], rng: &mut R) {
    for (j, v) in row.iter_mut().enumerate() {
        *v = match kind {
            FeatureKind::Mixture if MIXTURE_BINARY_COLUMNS.contains(&j) => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => -2.0 + 4.0 * rng.random::<f64>(),
        };
    }
}

fn draw_matrix<R: Rng + ?Sized>(spec: &SyntheticSpec, rows: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, spec.d);
    let mut row = vec![0.0; spec.d];
    for i in 0..rows {
        loop {
            draw_row(spec.feature_kind, &mut row, rng);
            let near_pole =
                spec.f0_kind == OutcomeKind::Complex && libm::fabs(complex_denominator(&row)) < POLE_GUARD;
            if !near_pole {
                break;
            }
        }
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Train and test inputs, drawn row by row from one stream.
pub fn gen_features<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let train = draw_matrix(spec, spec.n, rng);
    let test = draw_matrix(spec, spec.test_size(), rng);
    Ok((train, test))
}

/// One joint draw of a zero-mean GP at the rows of `points`.
///
/// Identical rows share one latent value, so duplicates never make the
/// covariance singular.
pub fn sample_gp_outcome<R: Rng + ?Sized>(
    kernel: GpKernel,
    points: &DMatrix<f64>,
    lengthscale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if points.nrows() == 0 {
        return Err(Error::Empty("GP sample points"));
    }
    let rows: Vec<Vec<f64>> = points.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut unique: Vec<usize> = Vec::new();
    let mut slot = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match unique.iter().position(|&u| rows[u] == *row) {
            Some(k) => slot.push(k),
            None => {
                slot.push(unique.len());
                unique.push(i);
            }
        }
    }
    let m = unique.len();
    let mut k = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let r2: f64 = rows[unique[a]]
                .iter()
                .zip(&rows[unique[b]])
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            let v = kernel.eval(libm::sqrt(r2), lengthscale);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
        k[(a, a)] += GP_JITTER;
    }
    let chol = cholesky_jittered(&k)?;
    let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
    let latent = chol.l() * z;
    Ok(DVector::from_iterator(rows.len(), slot.iter().map(|&s| latent[s])))
}

/// A generated benchmark problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_train: DMatrix<f64>,
    pub y_train: Vec<f64>,
    pub f_train: Vec<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
    pub f_test: Vec<f64>,
    pub roles: Vec<VariableRole>,
    pub causal: Vec<bool>,
}

/// Generates a full problem. Features, latent function and noise use the
/// independent streams 0, 1 and 2 of `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (x_train, x_test) = gen_features(spec, &mut stream(spec.seed, 0))?;
    let (n, m) = (x_train.nrows(), x_test.nrows());
    let (f_train, f_test) = match spec.f0_kind {
        OutcomeKind::Linear | OutcomeKind::Complex => {
            let eval = |x: &DMatrix<f64>| -> Result<Vec<f64>> {
                x.row_iter()
                    .map(|r| {
                        let row: Vec<f64> = r.iter().copied().collect();
                        f0_eval(spec.f0_kind, &row)
                    })
                    .collect()
            };
            (eval(&x_train)?, eval(&x_test)?)
        }
        OutcomeKind::Rbf | OutcomeKind::Matern32 => {
            let kernel = if spec.f0_kind == OutcomeKind::Rbf {
                GpKernel::Rbf
            } else {
                GpKernel::Matern32
            };
            let mut points = DMatrix::zeros(n + m, CAUSAL_VARIABLES);
            for j in 0..CAUSAL_VARIABLES {
                for i in 0..n {
                    points[(i, j)] = x_train[(i, j)];
                }
                for i in 0..m {
                    points[(n + i, j)] = x_test[(i, j)];
                }
            }
            let latent = sample_gp_outcome(kernel, &points, spec.lengthscale, &mut stream(spec.seed, 1))?;
            (latent.rows(0, n).iter().copied().collect(), latent.rows(n, m).iter().copied().collect())
        }
    };
    let mut noise_rng = stream(spec.seed, 2);
    let sd = libm::sqrt(spec.noise_variance);
    let mut noisy = |f: &[f64]| -> Vec<f64> {
        f.iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                v + sd * z
            })
            .collect()
    };
    let y_train = noisy(&f_train);
    let y_test = noisy(&f_test);
    Ok(Dataset {
        x_train,
        y_train,
        f_train,
        x_test,
        y_test,
        f_test,
        roles: spec.roles(),
        causal: spec.causal_mask(),
    })
}

/// Area under the ROC curve of `scores` against `causal`, with midranks for
/// ties: the probability that a random causal variable outscores a random
/// non-causal one, counting ties as one half.
pub fn auroc(scores: &[f64], causal: &[bool]) -> Result<f64> {
    check_dim(scores.len(), causal.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("importance scores"));
    }
    let positives = causal.iter().filter(|c| **c).count();
    let negatives = causal.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(invalid("AUROC needs both causal and non-causal variables"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // one-based ranks start+1 ..= end share their average
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    let rank_sum: f64 = ranks.iter().zip(causal).filter(|(_, c)| **c).map(|(r, _)| r).sum();
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

pub fn mean_squared_error(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Empty("prediction targets"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}
