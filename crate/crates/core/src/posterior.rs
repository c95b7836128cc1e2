//! Conjugate Gaussian posterior over basis weights.
//!
//! With prior `β ~ N(μ, I)` and likelihood `y ~ N(Φβ, σ²I)` the posterior is
//! `Σ = (ΦᵀΦ/σ² + I)⁻¹`, `m = μ + ΣΦᵀ(y − Φμ)/σ²`. Data can be streamed in
//! minibatches either through the precision `S = Σ⁻¹` (mergeable across
//! shards) or through Woodbury updates of `Σ` itself.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{self, cholesky_jittered, serde_matrix, serde_vector, symmetrize};

/// Lower bound on a noise-variance estimate.
pub const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorMode {
    /// Accumulate `S = I + ΦᵀΦ/σ²` and invert once at the end.
    #[default]
    Precision,
    /// Update `Σ` after every batch with the Woodbury identity.
    Woodbury,
}

/// A posterior covariance, kept structured where the features allow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case")]
pub enum Covariance {
    Dense {
        #[serde(with = "serde_matrix")]
        matrix: DMatrix<f64>,
    },
    Diagonal {
        #[serde(with = "serde_vector")]
        variances: DVector<f64>,
    },
    /// Block-diagonal, blocks in feature order.
    Blocks { blocks: Vec<Covariance> },
}

/// A square-root factor `L` of a [`Covariance`], `L Lᵀ = Σ`.
#[derive(Debug, Clone)]
pub enum CovarianceFactor {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
    Blocks(Vec<CovarianceFactor>),
}

impl CovarianceFactor {
    /// Writes `L z` into `out`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        match self {
            CovarianceFactor::Dense(l) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..z.len()).map(|k| l[(i, k)] * z[k]).sum();
                }
            }
            CovarianceFactor::Diagonal(s) => {
                for ((o, s), z) in out.iter_mut().zip(s.iter()).zip(z) {
                    *o = s * z;
                }
            }
            CovarianceFactor::Blocks(blocks) => {
                let mut start = 0;
                for b in blocks {
                    let end = start + b.dim();
                    b.apply(&z[start..end], &mut out[start..end]);
                    start = end;
                }
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            CovarianceFactor::Dense(l) => l.nrows(),
            CovarianceFactor::Diagonal(s) => s.len(),
            CovarianceFactor::Blocks(b) => b.iter().map(|b| b.dim()).sum(),
        }
    }
}

impl Covariance {
    pub fn identity(dim: usize) -> Self {
        Covariance::Diagonal {
            variances: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Dense { matrix } => matrix.nrows(),
            Covariance::Diagonal { variances } => variances.len(),
            Covariance::Blocks { blocks } => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Dense { matrix } => matrix.clone(),
            Covariance::Diagonal { variances } => DMatrix::from_diagonal(variances),
            Covariance::Blocks { blocks } => {
                let dim = self.dim();
                let mut out = DMatrix::zeros(dim, dim);
                let mut start = 0;
                for b in blocks {
                    let k = b.dim();
                    out.view_mut((start, start), (k, k)).copy_from(&b.to_dense());
                    start += k;
                }
                out
            }
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Covariance::Dense { matrix } => matrix.diagonal(),
            Covariance::Diagonal { variances } => variances.clone(),
            Covariance::Blocks { blocks } => {
                let parts: Vec<f64> = blocks.iter().flat_map(|b| b.diagonal().iter().copied().collect::<Vec<_>>()).collect();
                DVector::from_vec(parts)
            }
        }
    }

    /// `Σ v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Covariance::Dense { matrix } => matrix * v,
            Covariance::Diagonal { variances } => variances.component_mul(v),
            Covariance::Blocks { blocks } => {
                let mut out = DVector::zeros(v.len());
                let mut start = 0;
                for b in blocks {
                    let k = b.dim();
                    let part = b.mul_vec(&v.rows(start, k).into_owned());
                    out.rows_mut(start, k).copy_from(&part);
                    start += k;
                }
                out
            }
        }
    }

    /// `vᵀ Σ v` for a slice `v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Covariance::Dense { matrix } => {
                let mut total = 0.0;
                for (k, vk) in v.iter().enumerate() {
                    if *vk == 0.0 {
                        continue;
                    }
                    let col: f64 = matrix.column(k).iter().zip(v).map(|(a, b)| a * b).sum();
                    total += vk * col;
                }
                total
            }
            Covariance::Diagonal { variances } => v.iter().zip(variances.iter()).map(|(a, s)| a * a * s).sum(),
            Covariance::Blocks { blocks } => {
                let mut start = 0;
                let mut total = 0.0;
                for b in blocks {
                    let k = b.dim();
                    total += b.quad_form(&v[start..start + k]);
                    start += k;
                }
                total
            }
        }
    }

    /// `M Σ` for any `M` with `D` columns.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Covariance::Dense { matrix } => m * matrix,
            Covariance::Diagonal { variances } => {
                let mut out = m.clone();
                for (k, s) in variances.iter().enumerate() {
                    out.column_mut(k).scale_mut(*s);
                }
                out
            }
            Covariance::Blocks { blocks } => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                let mut start = 0;
                for b in blocks {
                    let k = b.dim();
                    let part = b.right_mul(&m.columns(start, k).into_owned());
                    out.columns_mut(start, k).copy_from(&part);
                    start += k;
                }
                out
            }
        }
    }

    /// `tr(G Σ)` for a symmetric `G`.
    pub fn trace_product(&self, g: &DMatrix<f64>) -> f64 {
        match self {
            Covariance::Dense { matrix } => g.component_mul(matrix).sum(),
            Covariance::Diagonal { variances } => g.diagonal().dot(variances),
            Covariance::Blocks { blocks } => {
                let mut start = 0;
                let mut total = 0.0;
                for b in blocks {
                    let k = b.dim();
                    total += b.trace_product(&g.view((start, start), (k, k)).into_owned());
                    start += k;
                }
                total
            }
        }
    }

    /// `Φ Σ Φᵀ`.
    pub fn sandwich(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.right_mul(phi) * phi.transpose();
        symmetrize(&mut out);
        out
    }

    /// Diagonal of `Φ Σ Φᵀ`.
    pub fn sandwich_diag(&self, phi: &DMatrix<f64>) -> DVector<f64> {
        let mut row = vec![0.0; phi.ncols()];
        DVector::from_iterator(
            phi.nrows(),
            (0..phi.nrows()).map(|i| {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = phi[(i, k)];
                }
                self.quad_form(&row)
            }),
        )
    }

    pub fn factor(&self) -> CovarianceFactor {
        match self {
            Covariance::Dense { matrix } => CovarianceFactor::Dense(linalg::psd_sqrt(matrix)),
            Covariance::Diagonal { variances } => CovarianceFactor::Diagonal(variances.map(|v| libm::sqrt(v.max(0.0)))),
            Covariance::Blocks { blocks } => CovarianceFactor::Blocks(blocks.iter().map(|b| b.factor()).collect()),
        }
    }
}

/// Gaussian posterior `β ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPosterior {
    #[serde(with = "serde_vector")]
    pub mean: DVector<f64>,
    pub cov: Covariance,
    pub noise_variance: f64,
    #[serde(with = "serde_vector")]
    pub prior_mean: DVector<f64>,
    /// `log p(y)` of the data the posterior was fit on, when known.
    pub log_marginal: Option<f64>,
}

impl WeightPosterior {
    pub fn prior(prior_mean: DVector<f64>, noise_variance: f64) -> Self {
        Self {
            mean: prior_mean.clone(),
            cov: Covariance::identity(prior_mean.len()),
            noise_variance,
            prior_mean,
            log_marginal: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Block-diagonal posterior of independently fit feature blocks.
    ///
    /// Diagonal blocks merge into one diagonal covariance. The stacked noise
    /// variance is the mean of the block values.
    pub fn stack(parts: Vec<WeightPosterior>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty("posterior blocks"));
        }
        let noise_variance = parts.iter().map(|p| p.noise_variance).sum::<f64>() / parts.len() as f64;
        let mean = DVector::from_iterator(
            parts.iter().map(|p| p.dim()).sum(),
            parts.iter().flat_map(|p| p.mean.iter().copied().collect::<Vec<_>>()),
        );
        let prior_mean = DVector::from_iterator(
            mean.len(),
            parts.iter().flat_map(|p| p.prior_mean.iter().copied().collect::<Vec<_>>()),
        );
        let all_diagonal = parts.iter().all(|p| matches!(p.cov, Covariance::Diagonal { .. }));
        let cov = if all_diagonal {
            Covariance::Diagonal {
                variances: DVector::from_iterator(
                    mean.len(),
                    parts.iter().flat_map(|p| p.cov.diagonal().iter().copied().collect::<Vec<_>>()),
                ),
            }
        } else {
            Covariance::Blocks {
                blocks: parts.into_iter().map(|p| p.cov).collect(),
            }
        };
        Ok(Self {
            mean,
            cov,
            noise_variance,
            prior_mean,
            log_marginal: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Precision(DMatrix<f64>),
    Woodbury(DMatrix<f64>),
}

/// Streaming accumulator for the weight posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorAccumulator {
    state: State,
    p: DVector<f64>,
    prior_mean: DVector<f64>,
    noise_variance: f64,
    count: usize,
    /// `Σ (y − Φμ)²`, needed for the log marginal likelihood.
    residual_ss: f64,
    /// `log |Σ|`, tracked in Woodbury mode.
    log_det_cov: f64,
}

impl PosteriorAccumulator {
    pub fn new(dim: usize, noise_variance: f64, mode: PosteriorMode) -> Result<Self> {
        Self::with_prior_mean(DVector::zeros(dim), noise_variance, mode)
    }

    pub fn with_prior_mean(prior_mean: DVector<f64>, noise_variance: f64, mode: PosteriorMode) -> Result<Self> {
        let dim = prior_mean.len();
        if dim == 0 {
            return Err(invalid("posterior dimension must be positive"));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(invalid("noise variance must be positive and finite"));
        }
        if prior_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior mean"));
        }
        let identity = DMatrix::identity(dim, dim);
        let state = match mode {
            PosteriorMode::Precision => State::Precision(identity),
            PosteriorMode::Woodbury => State::Woodbury(identity),
        };
        Ok(Self {
            state,
            p: DVector::zeros(dim),
            prior_mean,
            noise_variance,
            count: 0,
            residual_ss: 0.0,
            log_det_cov: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn mode(&self) -> PosteriorMode {
        match self.state {
            State::Precision(_) => PosteriorMode::Precision,
            State::Woodbury(_) => PosteriorMode::Woodbury,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Adds one minibatch (`Φ` is `n_m × D`). Empty batches are a no-op.
    pub fn accumulate_batch(&mut self, phi: &DMatrix<f64>, y: &[f64]) -> Result<()> {
        check_dim(self.dim(), phi.ncols())?;
        check_dim(phi.nrows(), y.len())?;
        if phi.nrows() == 0 {
            return Ok(());
        }
        if phi.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("minibatch"));
        }
        let inv = 1.0 / self.noise_variance;
        let residual = DVector::from_column_slice(y) - phi * &self.prior_mean;
        self.p += phi.tr_mul(&residual) * inv;
        self.residual_ss += residual.norm_squared();
        self.count += phi.nrows();
        match &mut self.state {
            State::Precision(s) => {
                *s += phi.tr_mul(phi) * inv;
                symmetrize(s);
            }
            State::Woodbury(sigma) => {
                let b = &*phi * &*sigma;
                let mut m = &b * phi.transpose();
                for i in 0..m.nrows() {
                    m[(i, i)] += self.noise_variance;
                }
                symmetrize(&mut m);
                let chol = cholesky_jittered(&m)?;
                // log|Σ_new| = log|Σ| − log|I + ΦΣΦᵀ/σ²|
                let log_det_m: f64 = chol.l().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
                self.log_det_cov -= log_det_m - phi.nrows() as f64 * libm::log(self.noise_variance);
                let solved = chol.solve(&b);
                *sigma -= b.transpose() * solved;
                symmetrize(sigma);
            }
        }
        Ok(())
    }

    /// Combines a shard accumulated independently from the same prior.
    ///
    /// Only precision-mode accumulators merge; the result does not depend on
    /// how the data were sharded or in which order shards are merged.
    pub fn merge(&mut self, other: &PosteriorAccumulator) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        if self.noise_variance != other.noise_variance || self.prior_mean != other.prior_mean {
            return Err(invalid("accumulators disagree on prior or noise variance"));
        }
        match (&mut self.state, &other.state) {
            (State::Precision(s), State::Precision(t)) => {
                *s += t;
                for i in 0..s.nrows() {
                    s[(i, i)] -= 1.0;
                }
            }
            _ => return Err(invalid("only precision-mode accumulators can be merged")),
        }
        self.p += &other.p;
        self.count += other.count;
        self.residual_ss += other.residual_ss;
        Ok(())
    }

    pub fn finalize(&self) -> Result<WeightPosterior> {
        let (cov, shift, log_det_s) = match &self.state {
            State::Precision(s) => {
                let off_diagonal_zero = (0..s.ncols()).all(|j| (0..s.nrows()).all(|i| i == j || s[(i, j)] == 0.0));
                if off_diagonal_zero {
                    let variances = s.diagonal().map(|v| 1.0 / v);
                    let shift = variances.component_mul(&self.p);
                    let log_det = s.diagonal().iter().map(|v| libm::log(*v)).sum();
                    (Covariance::Diagonal { variances }, shift, log_det)
                } else {
                    let chol = cholesky_jittered(s)?;
                    let log_det = chol.l().diagonal().iter().map(|v| 2.0 * libm::log(*v)).sum();
                    let mut sigma = chol.inverse();
                    symmetrize(&mut sigma);
                    let shift = chol.solve(&self.p);
                    (Covariance::Dense { matrix: sigma }, shift, log_det)
                }
            }
            State::Woodbury(sigma) => {
                let shift = sigma * &self.p;
                (Covariance::Dense { matrix: sigma.clone() }, shift, -self.log_det_cov)
            }
        };
        let n = self.count as f64;
        let log_marginal = -0.5
            * (n * libm::log(2.0 * PI * self.noise_variance) + log_det_s + self.residual_ss / self.noise_variance
                - self.p.dot(&shift));
        Ok(WeightPosterior {
            mean: &self.prior_mean + shift,
            cov,
            noise_variance: self.noise_variance,
            prior_mean: self.prior_mean.clone(),
            log_marginal: Some(log_marginal),
        })
    }
}

/// Posterior from a full design matrix in one batch.
pub fn fit_posterior(phi: &DMatrix<f64>, y: &[f64], noise_variance: f64, prior_mean: Option<&[f64]>) -> Result<WeightPosterior> {
    let mu = match prior_mean {
        Some(m) => DVector::from_column_slice(m),
        None => DVector::zeros(phi.ncols()),
    };
    let mut acc = PosteriorAccumulator::with_prior_mean(mu, noise_variance, PosteriorMode::Precision)?;
    acc.accumulate_batch(phi, y)?;
    acc.finalize()
}

/// Predictive mean `Φ*m` and covariance `Φ*ΣΦ*ᵀ` of `f*`.
pub fn predict(post: &WeightPosterior, phi_star: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(post.dim(), phi_star.ncols())?;
    Ok((phi_star * &post.mean, post.cov.sandwich(phi_star)))
}

/// Predictive mean and pointwise variance, without the full covariance.
pub fn predict_marginal(post: &WeightPosterior, phi_star: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(post.dim(), phi_star.ncols())?;
    Ok((phi_star * &post.mean, post.cov.sandwich_diag(phi_star)))
}

/// Prior mean values for [`dual_gp_posterior`]: `m` at the training points
/// and `m*` at the test points.
pub struct PriorMeans<'a> {
    pub train: &'a [f64],
    pub test: &'a [f64],
}

/// Kernel-form GP posterior at test points:
/// `m* + K*(K + σ²I)⁻¹(y − m)` and `K** − K*(K + σ²I)⁻¹K*ᵀ`.
pub fn dual_gp_posterior(
    k: &DMatrix<f64>,
    k_star: &DMatrix<f64>,
    k_star_star: &DMatrix<f64>,
    y: &[f64],
    noise_variance: f64,
    prior: Option<PriorMeans<'_>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let m = k_star.nrows();
    check_dim(n, k.ncols())?;
    check_dim(n, k_star.ncols())?;
    check_dim(n, y.len())?;
    check_dim(m, k_star_star.nrows())?;
    check_dim(m, k_star_star.ncols())?;
    if !(noise_variance > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    let (train_mean, test_mean) = match prior {
        Some(p) => {
            check_dim(n, p.train.len())?;
            check_dim(m, p.test.len())?;
            (DVector::from_column_slice(p.train), DVector::from_column_slice(p.test))
        }
        None => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += noise_variance;
    }
    symmetrize(&mut a);
    let chol = cholesky_jittered(&a)?;
    let alpha = chol.solve(&(DVector::from_column_slice(y) - train_mean));
    let mean = test_mean + k_star * alpha;
    let v = chol.solve(&k_star.transpose());
    let mut cov = k_star_star - k_star * v;
    symmetrize(&mut cov);
    Ok((mean, cov))
}

/// `K` i.i.d. draws `β = m + L z` as the rows of a `K × D` matrix.
pub fn sample_weights<R: Rng + ?Sized>(post: &WeightPosterior, samples: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if samples == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let dim = post.dim();
    let factor = post.cov.factor();
    let mut out = DMatrix::zeros(samples, dim);
    let mut z = vec![0.0; dim];
    let mut lz = vec![0.0; dim];
    for s in 0..samples {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        factor.apply(&z, &mut lz);
        for k in 0..dim {
            out[(s, k)] = post.mean[k] + lz[k];
        }
    }
    Ok(out)
}

/// Sufficient statistics for estimating σ², gathered in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    gram: DMatrix<f64>,
    phi_y: DVector<f64>,
    yy: f64,
    count: usize,
}

impl NoiseStats {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            phi_y: DVector::zeros(dim),
            yy: 0.0,
            count: 0,
        }
    }

    pub fn accumulate(&mut self, phi: &DMatrix<f64>, y: &[f64]) -> Result<()> {
        check_dim(self.gram.nrows(), phi.ncols())?;
        check_dim(phi.nrows(), y.len())?;
        if phi.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise estimation data"));
        }
        let yv = DVector::from_column_slice(y);
        self.gram += phi.tr_mul(phi);
        self.phi_y += phi.tr_mul(&yv);
        self.yy += yv.norm_squared();
        self.count += y.len();
        Ok(())
    }

    /// Maximum marginal-likelihood σ² by EM fixed-point iteration
    /// `σ² ← (‖y − Φm‖² + tr(ΦᵀΦΣ)) / n`, started at σ² = 1 and floored at
    /// [`NOISE_FLOOR`].
    pub fn estimate(&self, prior_mean: Option<&[f64]>) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Empty("noise estimation data"));
        }
        let dim = self.gram.nrows();
        let mu = match prior_mean {
            Some(m) => {
                check_dim(dim, m.len())?;
                DVector::from_column_slice(m)
            }
            None => DVector::zeros(dim),
        };
        // work with residuals r = y − Φμ
        let gram_mu = &self.gram * &mu;
        let phi_r = &self.phi_y - &gram_mu;
        let rr = (self.yy - 2.0 * mu.dot(&self.phi_y) + mu.dot(&gram_mu)).max(0.0);
        let eig = SymmetricEigen::new(self.gram.clone());
        let lambda: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let c = eig.eigenvectors.tr_mul(&phi_r);
        let n = self.count as f64;
        let mut sigma2: f64 = 1.0;
        for _ in 0..10_000 {
            // with δ = Σ Φᵀr / σ² the residual is r − Φδ
            let mut rss = rr;
            let mut trace = 0.0;
            for (l, ck) in lambda.iter().zip(c.iter()) {
                let denom = l + sigma2;
                rss -= ck * ck * (2.0 / denom - l / (denom * denom));
                trace += l * sigma2 / denom;
            }
            let next = (rss.max(0.0) + trace) / n;
            if next <= NOISE_FLOOR {
                return Ok(NOISE_FLOOR);
            }
            let done = libm::fabs(next - sigma2) <= 1e-12 * sigma2;
            sigma2 = next;
            if done {
                break;
            }
        }
        Ok(sigma2.max(NOISE_FLOOR))
    }
}

/// Noise variance for a design matrix when none is configured.
pub fn estimate_noise_variance(phi: &DMatrix<f64>, y: &[f64], prior_mean: Option<&[f64]>) -> Result<f64> {
    let mut stats = NoiseStats::new(phi.ncols());
    stats.accumulate(phi, y)?;
    stats.estimate(prior_mean)
}
