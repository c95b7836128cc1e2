use featgp_core::feature_maps::{AdditiveBasisMap, FeatureMap, RandomFourierMap, VariableRole};
use featgp_core::importance::{
    derivative_rows, exact_means, linear_grid, psi_mean_exact, psi_moments_commuting, psi_moments_exact, psi_samples,
    summarize, survival_curve, trapezoid, DerivativeGram, ExactMeanAccumulator, GramKind, PsiLaw, SummaryConfig,
};
use featgp_core::posterior::{fit_posterior, Covariance, WeightPosterior};
use featgp_core::rng::stream;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn normal_matrix(rows: usize, cols: usize, seed: u64, stream_id: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, stream_id);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_pair(seed: u64, dim: usize) -> (WeightPosterior, DerivativeGram) {
    let a = normal_matrix(dim, dim, seed, 0);
    let cov = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.05;
    let mean = normal_matrix(dim, 1, seed, 1).column(0).into_owned();
    let j = normal_matrix(dim + 3, dim, seed, 2);
    let gram = DerivativeGram::from_matrix(j.transpose() * &j, 7, 0, GramKind::Derivative).unwrap();
    let post = WeightPosterior {
        mean,
        cov: Covariance::Dense { matrix: cov },
        noise_variance: 0.1,
        prior_mean: DVector::zeros(dim),
        log_marginal: None,
    };
    (post, gram)
}

fn sample_mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
    (mean, var)
}

fn fitted_rff(seed: u64) -> (RandomFourierMap, WeightPosterior, DMatrix<f64>) {
    let mut rng = stream(seed, 5);
    let x = DMatrix::from_fn(60, 3, |_, _| rng.random_range(-2.0..2.0));
    let y: Vec<f64> = x.row_iter().map(|r| r[0] * r[0] + r[1]).collect();
    let map = RandomFourierMap::with_seed(3, 20, 1.5, seed).unwrap();
    let phi = featgp_core::feature_maps::feature_matrix(&map, &x).unwrap();
    let post = fit_posterior(&phi, &y, 0.05, None).unwrap();
    (map, post, x)
}

#[test]
fn commuting_formula_matches_exact_moments_for_isotropic_covariance() {
    let (mut post, gram) = random_pair(3, 5);
    post.cov = Covariance::Diagonal {
        variances: DVector::from_element(5, 0.4),
    };
    let (m1, v1) = psi_moments_exact(&post, &gram).unwrap();
    let (m2, v2) = psi_moments_commuting(&post, &gram).unwrap();
    assert!((m1 - m2).abs() < 1e-10 * m1);
    assert!((v1 - v2).abs() < 1e-10 * v1);
}

#[test]
fn degenerate_posterior_gives_a_point_mass() {
    let (mut post, gram) = random_pair(4, 3);
    post.cov = Covariance::Diagonal {
        variances: DVector::zeros(3),
    };
    let (mean, var) = psi_moments_exact(&post, &gram).unwrap();
    let point = post.mean.dot(&(gram.matrix() * &post.mean)) / 7.0;
    assert!((mean - point).abs() < 1e-12 * point);
    assert_eq!(var, 0.0);
}

#[test]
fn gram_and_projected_laws_agree() {
    let (map, post, x) = fitted_rff(8);
    // 5 points × 20 features forces the projected form
    let few = x.rows(0, 5).into_owned();
    for j in 0..3 {
        let law = PsiLaw::for_variable(&map, &post, &few, j).unwrap();
        assert!(matches!(law, PsiLaw::Projected { .. }));
        let rows = derivative_rows(&map, &few, j).unwrap();
        let gram = DerivativeGram::from_matrix(rows.transpose() * &rows, 5, j, GramKind::Derivative).unwrap();
        let (m1, v1) = law.moments().unwrap();
        let (m2, v2) = psi_moments_exact(&post, &gram).unwrap();
        assert!((m1 - m2).abs() < 1e-10 * m2.max(1e-300));
        assert!((v1 - v2).abs() < 1e-8 * v2.max(1e-300));
    }
}

#[test]
fn streamed_means_match_per_variable_grams() {
    let (map, post, x) = fitted_rff(9);
    let direct = exact_means(&map, &post, &x).unwrap();
    let mut left = ExactMeanAccumulator::new(3);
    let mut right = ExactMeanAccumulator::new(3);
    left.accumulate(&map, &post, &x.rows(0, 25).into_owned()).unwrap();
    right.accumulate(&map, &post, &x.rows(25, 35).into_owned()).unwrap();
    left.merge(&right).unwrap();
    let merged = left.means().unwrap();
    for j in 0..3 {
        let mut gram = DerivativeGram::new(&map, j).unwrap();
        gram.accumulate(&map, &x).unwrap();
        let reference = psi_mean_exact(&post, &gram).unwrap();
        assert!((direct[j] - reference).abs() < 1e-10 * reference);
        assert!((merged[j] - reference).abs() < 1e-10 * reference);
    }
}

#[test]
fn irrelevant_binary_column_has_only_prior_importance() {
    // y ignores column 1, so its contrast importance is driven by posterior
    // spread alone and stays far below the signal column
    let mut rng = stream(17, 0);
    let x = DMatrix::from_fn(400, 2, |_, j| if j == 0 { rng.random_range(-2.0..2.0) } else { rng.random_range(0..2) as f64 });
    let y: Vec<f64> = x.column(0).iter().map(|v| v.sin()).collect();
    let roles = vec![VariableRole::Continuous, VariableRole::Binary];
    let map = AdditiveBasisMap::fit(&x, roles, 6).unwrap();
    let phi = featgp_core::feature_maps::feature_matrix(&map, &x).unwrap();
    let post = fit_posterior(&phi, &y, 0.01, None).unwrap();
    let means = exact_means(&map, &post, &x).unwrap();
    assert!(means[1] < 1e-3 * means[0]);
    assert_eq!(map.roles()[1], VariableRole::Binary);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_moments_match_monte_carlo(seed in 0u64..10_000, dim in 1usize..7) {
        let (post, gram) = random_pair(seed, dim);
        let (mean, var) = psi_moments_exact(&post, &gram).unwrap();
        let k = 40_000;
        let samples = psi_samples(&post, &gram, k, &mut stream(seed, 77)).unwrap();
        let (mc_mean, mc_var) = sample_mean_and_variance(&samples);
        let se = (mc_var / k as f64).sqrt();
        prop_assert!((mc_mean - mean).abs() < 4.0 * se, "mean {} vs {} (se {})", mc_mean, mean, se);
        prop_assert!((mc_var - var).abs() < 0.1 * var, "variance {} vs {}", mc_var, var);
    }

    #[test]
    fn survival_integral_matches_sample_mean(seed in 0u64..10_000, dim in 1usize..6) {
        let (post, gram) = random_pair(seed, dim);
        let samples = psi_samples(&post, &gram, 5000, &mut stream(seed, 3)).unwrap();
        let upper = samples.iter().copied().fold(0.0, f64::max);
        let curve = survival_curve(&samples, &linear_grid(upper, 2000)).unwrap();
        let (mean, _) = sample_mean_and_variance(&samples);
        prop_assert!((trapezoid(&curve) - mean).abs() < 0.01 * mean);
        prop_assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn ranks_survive_common_gram_scaling(seed in 0u64..10_000, factor in 0.01f64..100.0) {
        let (map, post, x) = fitted_rff(seed);
        let grams: Vec<DerivativeGram> = (0..3)
            .map(|j| {
                let mut g = DerivativeGram::new(&map, j).unwrap();
                g.accumulate(&map, &x).unwrap();
                g
            })
            .collect();
        let scaled: Vec<DerivativeGram> = grams.iter().map(|g| g.scaled(factor)).collect();
        let config = SummaryConfig { samples: 50, ..SummaryConfig::default() };
        let a = summarize(&post, &grams, &config, seed).unwrap();
        let b = summarize(&post, &scaled, &config, seed).unwrap();
        for (u, v) in a.variables.iter().zip(&b.variables) {
            prop_assert_eq!(u.rank, v.rank);
            prop_assert!((v.mean - factor * u.mean).abs() < 1e-9 * v.mean.max(1e-300));
            prop_assert!((u.normalized_mean - v.normalized_mean).abs() < 1e-9);
        }
    }

    #[test]
    fn psi_samples_are_nonnegative(seed in 0u64..10_000, dim in 1usize..6) {
        let (post, gram) = random_pair(seed, dim);
        let samples = psi_samples(&post, &gram, 200, &mut stream(seed, 4)).unwrap();
        prop_assert!(samples.iter().all(|s| *s >= 0.0));
    }
}
