//! Posterior law of the integrated squared-derivative importance
//! `ψ_j(f) = (1/n) Σᵢ (∂f(xᵢ)/∂xʲ)²`.
//!
//! Under `f = φᵀβ` this is the quadratic form `βᵀG_jβ/n` with
//! `G_j = Σᵢ ∂φ(xᵢ)/∂xʲ ∂φ(xᵢ)/∂xʲᵀ`, a generalized χ² variable when `β` is
//! Gaussian. Discrete variables replace the derivative by level contrasts.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::feature_maps::{copy_row, ContrastScratch, FeatureMap, VariableRole};
use crate::linalg::{psd_sqrt, quantile_sorted, symmetrize};
use crate::posterior::{sample_weights, WeightPosterior};

/// Monte Carlo draws per variable unless configured otherwise.
pub const DEFAULT_SAMPLES: usize = 1000;
/// Points on an automatic survival grid.
pub const DEFAULT_GRID_POINTS: usize = 200;
/// Upper end of an automatic survival grid, as a sample quantile.
pub const DEFAULT_GRID_QUANTILE: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    Derivative,
    Contrast,
}

impl GramKind {
    pub fn for_role(role: &VariableRole) -> Self {
        if role.is_continuous() {
            GramKind::Derivative
        } else {
            GramKind::Contrast
        }
    }
}

/// Rows whose outer products make up `G_j` for the points in `x`.
///
/// Continuous variables contribute one derivative row per point; discrete
/// variables one contrast row per point and level pair.
pub fn derivative_rows<M: FeatureMap + ?Sized>(map: &M, x: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
    check_dim(map.input_dim(), x.ncols())?;
    if j >= map.input_dim() {
        return Err(Error::VariableOutOfRange {
            index: j,
            dim: map.input_dim(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("importance inputs"));
    }
    let role = &map.roles()[j];
    let pairs = role.contrast_pairs();
    let per_point = if role.is_continuous() { 1 } else { pairs.len() };
    let dim = map.output_dim();
    let mut rows = DMatrix::zeros(x.nrows() * per_point, dim);
    let mut point = vec![0.0; x.ncols()];
    let mut out = vec![0.0; dim];
    let mut scratch = ContrastScratch::new(map);
    for i in 0..x.nrows() {
        copy_row(x, i, &mut point);
        if role.is_continuous() {
            map.partial_into(&point, j, &mut out)?;
            for (k, v) in out.iter().enumerate() {
                rows[(i, k)] = *v;
            }
        } else {
            for (p, &pair) in pairs.iter().enumerate() {
                scratch.contrast_into(map, &point, j, pair, &mut out);
                for (k, v) in out.iter().enumerate() {
                    rows[(i * per_point + p, k)] = *v;
                }
            }
        }
    }
    Ok(rows)
}

/// Accumulated `G_j` together with the number of points behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeGram {
    matrix: DMatrix<f64>,
    count: usize,
    variable: usize,
    kind: GramKind,
}

impl DerivativeGram {
    /// An empty gram whose kind follows the role of variable `j` in `map`.
    pub fn new<M: FeatureMap + ?Sized>(map: &M, j: usize) -> Result<Self> {
        if j >= map.input_dim() {
            return Err(Error::VariableOutOfRange {
                index: j,
                dim: map.input_dim(),
            });
        }
        Ok(Self::empty(map.output_dim(), j, GramKind::for_role(&map.roles()[j])))
    }

    pub fn empty(dim: usize, variable: usize, kind: GramKind) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            count: 0,
            variable,
            kind,
        }
    }

    /// Wraps a precomputed matrix, which must be symmetric.
    pub fn from_matrix(matrix: DMatrix<f64>, count: usize, variable: usize, kind: GramKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(invalid("gram matrix must be square"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gram matrix"));
        }
        if (&matrix - matrix.transpose()).amax() > 1e-12 * (1.0 + matrix.amax()) {
            return Err(invalid("gram matrix must be symmetric"));
        }
        Ok(Self {
            matrix,
            count,
            variable,
            kind,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn variable(&self) -> usize {
        self.variable
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Adds the points in `x` (`batch × d`).
    pub fn accumulate<M: FeatureMap + ?Sized>(&mut self, map: &M, x: &DMatrix<f64>) -> Result<()> {
        check_dim(self.dim(), map.output_dim())?;
        let role = map.roles().get(self.variable).ok_or(Error::VariableOutOfRange {
            index: self.variable,
            dim: map.input_dim(),
        })?;
        if GramKind::for_role(role) != self.kind {
            return Err(Error::RoleMismatch {
                variable: self.variable,
                reason: match self.kind {
                    GramKind::Derivative => "derivative grams need a continuous variable",
                    GramKind::Contrast => "contrast grams need a binary or categorical variable",
                },
            });
        }
        let rows = derivative_rows(map, x, self.variable)?;
        self.matrix += rows.tr_mul(&rows);
        symmetrize(&mut self.matrix);
        self.count += x.nrows();
        Ok(())
    }

    /// Adds a gram accumulated on another shard.
    pub fn merge(&mut self, other: &DerivativeGram) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        if self.variable != other.variable || self.kind != other.kind {
            return Err(invalid("grams belong to different variables"));
        }
        self.matrix += &other.matrix;
        self.count += other.count;
        Ok(())
    }

    /// The same gram with `G` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            ..self.clone()
        }
    }

    fn checked_count(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Empty("gram has no accumulated points"));
        }
        Ok(self.count as f64)
    }
}

pub fn accumulate_gram<M: FeatureMap + ?Sized>(gram: &mut DerivativeGram, map: &M, x: &DMatrix<f64>) -> Result<()> {
    gram.accumulate(map, x)
}

/// `βᵀGβ / n`.
pub fn psi_point(beta: &[f64], gram: &DerivativeGram) -> Result<f64> {
    check_dim(gram.dim(), beta.len())?;
    let n = gram.checked_count()?;
    let b = DVector::from_column_slice(beta);
    Ok((b.dot(&(&gram.matrix * &b)) / n).max(0.0))
}

fn check_pair(post: &WeightPosterior, gram: &DerivativeGram) -> Result<f64> {
    check_dim(gram.dim(), post.dim())?;
    gram.checked_count()
}

/// `(mᵀGm + tr(GΣ)) / n`.
pub fn psi_mean_exact(post: &WeightPosterior, gram: &DerivativeGram) -> Result<f64> {
    let n = check_pair(post, gram)?;
    let gm = &gram.matrix * &post.mean;
    Ok(((post.mean.dot(&gm) + post.cov.trace_product(&gram.matrix)) / n).max(0.0))
}

/// Exact mean and variance of `βᵀGβ/n`:
/// variance `(2 tr((GΣ)²) + 4 mᵀGΣGm) / n²`.
pub fn psi_moments_exact(post: &WeightPosterior, gram: &DerivativeGram) -> Result<(f64, f64)> {
    let n = check_pair(post, gram)?;
    let mean = psi_mean_exact(post, gram)?;
    let gs = post.cov.right_mul(&gram.matrix);
    let trace_sq = gs.component_mul(&gs.transpose()).sum();
    let gm = &gram.matrix * &post.mean;
    let variance = (2.0 * trace_sq + 4.0 * post.cov.quad_form(gm.as_slice())) / (n * n);
    Ok((mean, variance.max(0.0)))
}

/// Moments from the eigen-decomposition `G = Σ λᵢ vᵢvᵢᵀ`, treating the
/// projections `vᵢᵀβ` as independent.
///
/// Exact only when `Σ` and `G` commute; kept as a diagnostic against
/// [`psi_moments_exact`].
pub fn psi_moments_commuting(post: &WeightPosterior, gram: &DerivativeGram) -> Result<(f64, f64)> {
    let n = check_pair(post, gram)?;
    let eig = SymmetricEigen::new(gram.matrix.clone());
    let (mut mean, mut variance) = (0.0, 0.0);
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i).into_owned();
        let proj = v.dot(&post.mean);
        let mu = proj * proj;
        let var = post.cov.quad_form(v.as_slice());
        mean += lambda * (var + mu);
        variance += 2.0 * lambda * lambda * (var * var + 2.0 * var * mu);
    }
    Ok((mean / n, variance / (n * n)))
}

/// Posterior law of one `ψ_j`.
#[derive(Debug, Clone)]
pub enum PsiLaw<'a> {
    /// `βᵀGβ/n` with `β` from the weight posterior.
    Gram {
        post: &'a WeightPosterior,
        gram: DerivativeGram,
    },
    /// `‖z‖²/n` with `z = Jβ ~ N(Jm, JΣJᵀ)`, where `G = JᵀJ`. Cheaper than
    /// the weight-space form when `J` has fewer rows than columns.
    Projected {
        center: DVector<f64>,
        cov: DMatrix<f64>,
        count: usize,
        variable: usize,
        kind: GramKind,
    },
}

impl<'a> PsiLaw<'a> {
    /// Builds the law of `ψ_j` on the points `x`, in whichever space is
    /// smaller.
    pub fn for_variable<M: FeatureMap + ?Sized>(
        map: &M,
        post: &'a WeightPosterior,
        x: &DMatrix<f64>,
        j: usize,
    ) -> Result<Self> {
        check_dim(map.output_dim(), post.dim())?;
        if x.nrows() == 0 {
            return Err(Error::Empty("importance inputs"));
        }
        let kind = GramKind::for_role(&map.roles().get(j).cloned().unwrap_or(VariableRole::Continuous));
        let rows = derivative_rows(map, x, j)?;
        if rows.nrows() >= rows.ncols() {
            let mut matrix = rows.tr_mul(&rows);
            symmetrize(&mut matrix);
            let gram = DerivativeGram::from_matrix(matrix, x.nrows(), j, kind)?;
            Ok(PsiLaw::Gram { post, gram })
        } else {
            Ok(PsiLaw::Projected {
                center: &rows * &post.mean,
                cov: post.cov.sandwich(&rows),
                count: x.nrows(),
                variable: j,
                kind,
            })
        }
    }

    pub fn variable(&self) -> usize {
        match self {
            PsiLaw::Gram { gram, .. } => gram.variable,
            PsiLaw::Projected { variable, .. } => *variable,
        }
    }

    pub fn kind(&self) -> GramKind {
        match self {
            PsiLaw::Gram { gram, .. } => gram.kind,
            PsiLaw::Projected { kind, .. } => *kind,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.moments()?.0)
    }

    pub fn moments(&self) -> Result<(f64, f64)> {
        match self {
            PsiLaw::Gram { post, gram } => psi_moments_exact(post, gram),
            PsiLaw::Projected { center, cov, count, .. } => {
                if *count == 0 {
                    return Err(Error::Empty("gram has no accumulated points"));
                }
                let n = *count as f64;
                let mean = (center.norm_squared() + cov.trace()) / n;
                let variance = (2.0 * cov.norm_squared() + 4.0 * center.dot(&(cov * center))) / (n * n);
                Ok((mean.max(0.0), variance.max(0.0)))
            }
        }
    }

    /// `k` independent draws of `ψ_j`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            PsiLaw::Gram { post, gram } => psi_samples(post, gram, k, rng),
            PsiLaw::Projected { center, cov, count, .. } => {
                if k == 0 {
                    return Err(invalid("sample count must be at least 1"));
                }
                let n = *count as f64;
                let l = psd_sqrt(cov);
                let m = center.len();
                let mut z = DVector::zeros(m);
                let mut out = Vec::with_capacity(k);
                for _ in 0..k {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(rng);
                    }
                    let w = center + &l * &z;
                    out.push(w.norm_squared() / n);
                }
                Ok(out)
            }
        }
    }
}

/// Monte Carlo draws `β⁽ˢ⁾ᵀGβ⁽ˢ⁾/n` with `β⁽ˢ⁾` from the posterior.
pub fn psi_samples<R: Rng + ?Sized>(
    post: &WeightPosterior,
    gram: &DerivativeGram,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = check_pair(post, gram)?;
    let draws = sample_weights(post, k, rng)?;
    let projected = &draws * &gram.matrix;
    Ok((0..k)
        .map(|s| (draws.row(s).dot(&projected.row(s)) / n).max(0.0))
        .collect())
}

/// `(s, P(ψ > s))` for every `s` on an ascending grid.
pub fn survival_curve(samples: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Empty("importance samples"));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) || grid.iter().any(|s| !s.is_finite()) {
        return Err(invalid("survival grid must be finite and ascending"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&s| {
            let at_or_below = sorted.partition_point(|v| *v <= s);
            (s, (sorted.len() - at_or_below) as f64 / k)
        })
        .collect())
}

/// Evenly spaced grid from 0 to `upper` with `points` entries.
pub fn linear_grid(upper: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| upper * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Trapezoid rule over `(s, value)` pairs.
pub fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Survival grid placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "grid", rename_all = "snake_case")]
pub enum GridSpec {
    /// `points` values from 0 to the `upper_quantile` of each variable's samples.
    Auto { points: usize, upper_quantile: f64 },
    /// One grid for every variable.
    Shared { values: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            points: DEFAULT_GRID_POINTS,
            upper_quantile: DEFAULT_GRID_QUANTILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub samples: usize,
    pub keep_samples: bool,
    pub grid: GridSpec,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            keep_samples: false,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportance {
    pub variable: usize,
    pub kind: GramKind,
    /// Exact posterior mean of `ψ_j`.
    pub mean: f64,
    /// Exact posterior variance of `ψ_j`.
    pub variance: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// 1 for the largest posterior mean.
    pub rank: usize,
    /// `mean / max_j mean`, or 0 when every mean is 0.
    pub normalized_mean: f64,
    pub samples: Option<Vec<f64>>,
    pub survival: Vec<(f64, f64)>,
}

impl VariableImportance {
    pub fn sd(&self) -> f64 {
        libm::sqrt(self.variance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub variables: Vec<VariableImportance>,
}

impl ImportanceSummary {
    pub fn means(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.mean).collect()
    }
}

/// Ranks 1.. by descending score, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Summary of one variable before ranking (`rank` and `normalized_mean`
/// are left at 0). Draws come from `rng::stream(seed, j)` for variable `j`,
/// so results do not depend on evaluation order.
pub fn summarize_law(law: &PsiLaw<'_>, config: &SummaryConfig, seed: u64) -> Result<VariableImportance> {
    let (mean, variance) = law.moments()?;
    let mut rng = crate::rng::stream(seed, law.variable() as u64);
    let samples = law.sample(config.samples, &mut rng)?;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let grid = match &config.grid {
        GridSpec::Auto { points, upper_quantile } => {
            let upper = quantile_sorted(&sorted, *upper_quantile);
            linear_grid(if upper > 0.0 { upper } else { 1.0 }, *points)
        }
        GridSpec::Shared { values } => values.clone(),
    };
    Ok(VariableImportance {
        variable: law.variable(),
        kind: law.kind(),
        mean,
        variance,
        q05: quantile_sorted(&sorted, 0.05),
        q50: quantile_sorted(&sorted, 0.5),
        q95: quantile_sorted(&sorted, 0.95),
        rank: 0,
        normalized_mean: 0.0,
        survival: survival_curve(&samples, &grid)?,
        samples: config.keep_samples.then_some(samples),
    })
}

/// Fills in ranks and normalized means across variables.
pub fn rank_variables(mut variables: Vec<VariableImportance>) -> Result<ImportanceSummary> {
    if variables.is_empty() {
        return Err(Error::Empty("importance variables"));
    }
    let means: Vec<f64> = variables.iter().map(|v| v.mean).collect();
    let max = means.iter().copied().fold(0.0, f64::max);
    for (v, rank) in variables.iter_mut().zip(rank_descending(&means)) {
        v.rank = rank;
        v.normalized_mean = if max > 0.0 { v.mean / max } else { 0.0 };
    }
    Ok(ImportanceSummary { variables })
}

/// Summarizes one law per variable.
pub fn summarize_laws(laws: &[PsiLaw<'_>], config: &SummaryConfig, seed: u64) -> Result<ImportanceSummary> {
    let variables = laws
        .iter()
        .map(|law| summarize_law(law, config, seed))
        .collect::<Result<Vec<_>>>()?;
    rank_variables(variables)
}

/// Summary from one precomputed gram per variable.
pub fn summarize(
    post: &WeightPosterior,
    grams: &[DerivativeGram],
    config: &SummaryConfig,
    seed: u64,
) -> Result<ImportanceSummary> {
    let laws: Vec<PsiLaw<'_>> = grams
        .iter()
        .map(|g| PsiLaw::Gram {
            post,
            gram: g.clone(),
        })
        .collect();
    summarize_laws(&laws, config, seed)
}

/// Summary of every input variable of `map` over the points `x`.
pub fn summarize_map<M: FeatureMap + ?Sized>(
    map: &M,
    post: &WeightPosterior,
    x: &DMatrix<f64>,
    config: &SummaryConfig,
    seed: u64,
) -> Result<ImportanceSummary> {
    let laws = (0..map.input_dim())
        .map(|j| PsiLaw::for_variable(map, post, x, j))
        .collect::<Result<Vec<_>>>()?;
    summarize_laws(&laws, config, seed)
}

/// Survival curves of `ψ_j / max_k E[ψ_k]` on one shared grid, the
/// regularization-path view of a summary. Needs retained samples.
pub fn selection_path(summary: &ImportanceSummary, points: usize) -> Result<Vec<(usize, Vec<(f64, f64)>)>> {
    let max = summary.variables.iter().map(|v| v.mean).fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let mut normalized = Vec::with_capacity(summary.variables.len());
    let mut upper: f64 = 0.0;
    for v in &summary.variables {
        let samples = v
            .samples
            .as_ref()
            .ok_or_else(|| invalid("selection path needs retained samples"))?;
        let mut scaled: Vec<f64> = samples.iter().map(|s| s * scale).collect();
        scaled.sort_by(f64::total_cmp);
        upper = upper.max(quantile_sorted(&scaled, DEFAULT_GRID_QUANTILE));
        normalized.push((v.variable, scaled));
    }
    let grid = linear_grid(if upper > 0.0 { upper } else { 1.0 }, points);
    normalized
        .into_iter()
        .map(|(j, s)| Ok((j, survival_curve(&s, &grid)?)))
        .collect()
}

/// Streaming exact posterior means of every `ψ_j`, without forming grams.
///
/// Each point adds `(vᵀm)² + vᵀΣv` per derivative or contrast row `v`, which
/// costs one gradient evaluation per point instead of `D²` memory per
/// variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMeanAccumulator {
    sums: Vec<f64>,
    count: usize,
}

impl ExactMeanAccumulator {
    pub fn new(input_dim: usize) -> Self {
        Self {
            sums: vec![0.0; input_dim],
            count: 0,
        }
    }

    pub fn accumulate<M: FeatureMap + ?Sized>(&mut self, map: &M, post: &WeightPosterior, x: &DMatrix<f64>) -> Result<()> {
        let d = map.input_dim();
        let dim = map.output_dim();
        check_dim(self.sums.len(), d)?;
        check_dim(d, x.ncols())?;
        check_dim(dim, post.dim())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("importance inputs"));
        }
        let roles = map.roles();
        let mut point = vec![0.0; d];
        let mut grad = vec![0.0; d * dim];
        let mut contrast = vec![0.0; dim];
        let mut scratch = ContrastScratch::new(map);
        let mean = post.mean.as_slice();
        let contribution = |v: &[f64]| {
            let proj: f64 = v.iter().zip(mean).map(|(a, b)| a * b).sum();
            proj * proj + post.cov.quad_form(v)
        };
        for i in 0..x.nrows() {
            copy_row(x, i, &mut point);
            map.gradient_into(&point, &mut grad)?;
            for (j, role) in roles.iter().enumerate() {
                if role.is_continuous() {
                    self.sums[j] += contribution(&grad[j * dim..(j + 1) * dim]);
                } else {
                    for pair in role.contrast_pairs() {
                        scratch.contrast_into(map, &point, j, pair, &mut contrast);
                        self.sums[j] += contribution(&contrast);
                    }
                }
            }
        }
        self.count += x.nrows();
        Ok(())
    }

    pub fn merge(&mut self, other: &ExactMeanAccumulator) -> Result<()> {
        check_dim(self.sums.len(), other.sums.len())?;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn means(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Empty("importance inputs"));
        }
        Ok(self.sums.iter().map(|s| (s / self.count as f64).max(0.0)).collect())
    }
}

/// Exact posterior means of every `ψ_j` over the points `x`.
pub fn exact_means<M: FeatureMap + ?Sized>(map: &M, post: &WeightPosterior, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut acc = ExactMeanAccumulator::new(map.input_dim());
    acc.accumulate(map, post, x)?;
    acc.means()
}
