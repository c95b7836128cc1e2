//! Acceptance checks for the numerical core and the benchmark protocol.
//!
//! Runs as its own binary and prints one PASS/FAIL line per criterion.
//! Criteria listed in `EXPECTED_FAILURES` are known not to hold; they are
//! still run and reported, and the binary fails if one of them starts to
//! pass (so the list cannot go stale). Set `FEATGP_ACCEPTANCE_STRICT=1` to
//! count them as failures. Pass criterion numbers as arguments to run a
//! subset.

use std::process::ExitCode;
use std::time::Instant;

use featgp_core::benchgen::{self, FeatureKind, OutcomeKind, SyntheticSpec};
use featgp_core::feature_maps::{evaluate, partial, AdditiveBlock, AnyMap, FeatureMap, TreeMode, VariableRole};
use featgp_core::importance::{
    linear_grid, psi_mean_exact, psi_moments_exact, psi_samples, survival_curve, trapezoid, DerivativeGram, GramKind,
    PsiLaw,
};
use featgp_core::methods::{run_scenario, BenchmarkOptions};
use featgp_core::posterior::{
    dual_gp_posterior, fit_posterior, predict, Covariance, PosteriorAccumulator, PosteriorMode, PriorMeans,
    WeightPosterior,
};
use featgp_core::rng::stream;
use featgp_core::standardize::Standardizer;
use featgp_core::{fit_method, Method, MethodConfig};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Measured divergence: with discrete splits smoothed at c = 0.1 the
/// mixture-design AUROC stays well below the reference values.
const EXPECTED_FAILURES: &[usize] = &[5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

// 1 ------------------------------------------------------------------------

fn primal_dual() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut rng = stream(1000 + case, 0);
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..=100);
        let m = rng.random_range(1..=20);
        let scale = 1.0 / (dim as f64).sqrt();
        let phi = normal_matrix(n, dim, &mut rng) * scale;
        let phi_s = normal_matrix(m, dim, &mut rng) * scale;
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mu: Vec<f64> = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let noise = rng.random_range(0.05..1.0);
        let post = fit_posterior(&phi, &y, noise, Some(&mu)).unwrap();
        let (mean, cov) = predict(&post, &phi_s).unwrap();
        let mu_v = DVector::from_vec(mu);
        let train: Vec<f64> = (&phi * &mu_v).iter().copied().collect();
        let test: Vec<f64> = (&phi_s * &mu_v).iter().copied().collect();
        let (dual_mean, dual_cov) = dual_gp_posterior(
            &(&phi * phi.transpose()),
            &(&phi_s * phi.transpose()),
            &(&phi_s * phi_s.transpose()),
            &y,
            noise,
            Some(PriorMeans { train: &train, test: &test }),
        )
        .unwrap();
        worst = worst.max((&mean - &dual_mean).abs().max()).max(max_abs_diff(&cov, &dual_cov));
    }
    verdict(worst < 1e-8, format!("50 problems, max abs error {worst:.3e} (< 1e-8)"))
}

// 2 ------------------------------------------------------------------------

fn minibatches() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut rng = stream(2000 + case, 0);
        let n = rng.random_range(64..=200);
        let dim = rng.random_range(1..=40);
        let phi = normal_matrix(n, dim, &mut rng) / (dim as f64).sqrt();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mu = DVector::from_fn(dim, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
        let noise = rng.random_range(0.05..1.0);
        let mut posteriors: Vec<WeightPosterior> = Vec::new();
        for count in [1usize, 2, 7, 64] {
            for mode in [PosteriorMode::Precision, PosteriorMode::Woodbury] {
                let mut rows: Vec<usize> = (0..n).collect();
                rows.shuffle(&mut rng);
                let mut batches: Vec<Vec<usize>> = rows.chunks(n.div_ceil(count)).map(<[usize]>::to_vec).collect();
                batches.shuffle(&mut rng);
                let mut acc = PosteriorAccumulator::with_prior_mean(mu.clone(), noise, mode).unwrap();
                for b in &batches {
                    let yb: Vec<f64> = b.iter().map(|&i| y[i]).collect();
                    acc.accumulate_batch(&phi.select_rows(b), &yb).unwrap();
                }
                posteriors.push(acc.finalize().unwrap());
            }
        }
        for (i, a) in posteriors.iter().enumerate() {
            for b in &posteriors[i + 1..] {
                let gap = (&a.mean - &b.mean).abs().max().max(max_abs_diff(&a.cov.to_dense(), &b.cov.to_dense()));
                worst = worst.max(gap);
            }
        }
    }
    verdict(
        worst < 1e-8,
        format!("20 problems x splits 1/2/7/64 x both modes, max pairwise gap {worst:.3e} (< 1e-8)"),
    )
}

// 3 and 8 ------------------------------------------------------------------

fn random_pair(seed: u64, dim: usize) -> (WeightPosterior, DerivativeGram) {
    let mut rng = stream(seed, 0);
    let a = normal_matrix(dim, dim, &mut rng);
    let cov = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.05;
    let mean = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let count = rng.random_range(1..50);
    let j = normal_matrix(dim + 2, dim, &mut rng);
    let gram = DerivativeGram::from_matrix(j.transpose() * &j, count, 0, GramKind::Derivative).unwrap();
    let post = WeightPosterior {
        mean,
        cov: Covariance::Dense { matrix: cov },
        noise_variance: 0.1,
        prior_mean: DVector::zeros(dim),
        log_marginal: None,
    };
    (post, gram)
}

fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
    (mean, var)
}

fn moment_oracle() -> Verdict {
    let k = 1_000_000;
    let rows: Vec<(f64, f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|case| {
            let dim = 1 + (case as usize % 8);
            let (post, gram) = random_pair(3000 + case, dim);
            let (mean, var) = psi_moments_exact(&post, &gram).unwrap();
            let mean_only = psi_mean_exact(&post, &gram).unwrap();
            let samples = psi_samples(&post, &gram, k, &mut stream(3000 + case, 1)).unwrap();
            let (mc_mean, mc_var) = mean_and_variance(&samples);
            let z = (mc_mean - mean).abs() / (mc_var / k as f64).sqrt();
            let rel = (mc_var - var).abs() / var;
            let same = (mean_only - mean).abs() <= 1e-12 * mean.abs();
            (z, rel, same)
        })
        .collect();
    let max_z = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_rel = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let means_agree = rows.iter().all(|r| r.2);
    verdict(
        max_z < 3.0 && max_rel < 0.05 && means_agree,
        format!("50 cases, 1e6 draws: max |mean gap| {max_z:.2} SE (< 3), max variance error {:.2}% (< 5%)", 100.0 * max_rel),
    )
}

fn survival_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let (post, gram) = random_pair(8000 + case, 1 + (case as usize % 6));
        let samples = psi_samples(&post, &gram, 100_000, &mut stream(8000 + case, 1)).unwrap();
        let upper = samples.iter().copied().fold(0.0, f64::max);
        let curve = survival_curve(&samples, &linear_grid(upper, 2000)).unwrap();
        let (mean, _) = mean_and_variance(&samples);
        worst = worst.max((trapezoid(&curve) - mean).abs() / mean);
    }
    verdict(
        worst < 0.01,
        format!("20 cases, 2000-point grid: max relative gap {:.3}% (< 1%)", 100.0 * worst),
    )
}

// 4 ------------------------------------------------------------------------

/// Coordinates where a map is not smooth: tree split thresholds and spline
/// knots.
fn breakpoints(map: &AnyMap, out: &mut Vec<(usize, f64)>) {
    match map {
        AnyMap::SoftTree(t) => {
            for leaf in t.leaves() {
                out.extend(leaf.conditions.iter().map(|c| (c.feature, c.threshold)));
            }
        }
        AnyMap::AdditiveBasis(a) => {
            for (j, block) in a.blocks().iter().enumerate() {
                if let AdditiveBlock::Spline { knots } = block {
                    out.extend(knots.iter().map(|&k| (j, k)));
                }
            }
        }
        AnyMap::Concatenated(c) => {
            for m in 0..c.len() {
                breakpoints(c.member(m).1, out);
            }
        }
        AnyMap::RandomFourier(_) => {}
    }
}

fn relative_gradient_error(map: &AnyMap, x: &[f64], j: usize) -> f64 {
    let h = 1e-5;
    let exact = partial(map, x, j).unwrap();
    let (mut up, mut down) = (x.to_vec(), x.to_vec());
    up[j] += h;
    down[j] -= h;
    let a = evaluate(map, &up).unwrap();
    let b = evaluate(map, &down).unwrap();
    let (mut diff, mut scale) = (0.0, 0.0);
    for i in 0..exact.len() {
        let fd = (a[i] - b[i]) / (2.0 * h);
        diff += (exact[i] - fd) * (exact[i] - fd);
        scale += exact[i] * exact[i];
    }
    diff.sqrt() / scale.sqrt().max(1e-8)
}

fn gradient_fidelity() -> Verdict {
    let d = 4;
    let mut rng = stream(4000, 0);
    let x = DMatrix::from_fn(300, d, |_, _| rng.random_range(-2.0f64..2.0));
    let y: Vec<f64> = x.row_iter().map(|r| r[0].sin() + r[1] * r[2] - 0.5 * r[3] * r[3]).collect();
    let roles = vec![VariableRole::Continuous; d];
    let config = MethodConfig {
        n_trees: 5,
        lengthscales: vec![1.5],
        noise_variance: Some(0.01),
        ..MethodConfig::default()
    };
    let mut details = Vec::new();
    let mut pass = true;
    for method in Method::ALL {
        let mut map = fit_method(method, &x, &y, &roles, &config, 7).unwrap().importance_map();
        map.set_tree_mode(TreeMode::Soft);
        let mut cuts = Vec::new();
        breakpoints(&map, &mut cuts);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < 100 {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.9..1.9)).collect();
            if cuts.iter().any(|&(j, a)| (p[j] - a).abs() < 1e-3) {
                continue;
            }
            for j in 0..map.input_dim() {
                worst = worst.max(relative_gradient_error(&map, &p, j));
            }
            checked += 1;
        }
        pass &= worst < 1e-4;
        details.push(format!("{method} {worst:.2e}"));
    }
    verdict(pass, format!("100 points per map, max relative error: {} (< 1e-4)", details.join(", ")))
}

// 5, 6 ---------------------------------------------------------------------

fn mean_auroc(f0: OutcomeKind, features: FeatureKind, n: usize, d: usize, method: Method) -> f64 {
    let options = BenchmarkOptions::default();
    let scores: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SyntheticSpec::new(f0, features, n, d, seed);
            run_scenario(&spec, method, &options).unwrap().auroc
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn mixture_reproduction() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for (n, reference) in [(100, 0.80), (200, 0.93), (500, 0.99)] {
        let auroc = mean_auroc(OutcomeKind::Matern32, FeatureKind::Mixture, n, 100, Method::FdtForest);
        pass &= (auroc - reference).abs() <= 0.07;
        details.push(format!("n={n} {auroc:.3} (ref {reference:.2})"));
    }
    verdict(
        pass,
        format!("fdt_forest, mixture/matern32, d=100, 20 seeds: {} (tol 0.07)", details.join(", ")),
    )
}

fn linear_sanity() -> Verdict {
    let auroc = mean_auroc(OutcomeKind::Linear, FeatureKind::Continuous, 1000, 25, Method::AdditiveBasis);
    verdict(
        auroc >= 0.85,
        format!("additive_basis, continuous/linear, d=25, n=1000, 20 seeds: mean AUROC {auroc:.3} (>= 0.85)"),
    )
}

// 7 ------------------------------------------------------------------------

/// Posterior sd of ψ for each causal variable.
fn causal_psi_sd(n: usize, seed: u64) -> Vec<f64> {
    let spec = SyntheticSpec::new(OutcomeKind::Linear, FeatureKind::Continuous, n, 10, seed);
    let data = benchgen::generate(&spec).unwrap();
    let scaler = Standardizer::fit(&data.x_train, &data.roles).unwrap();
    let x = scaler.apply(&data.x_train).unwrap();
    let config = MethodConfig {
        noise_variance: Some(spec.noise_variance),
        ..MethodConfig::default()
    };
    let model = fit_method(Method::AdditiveBasis, &x, &data.y_train, &data.roles, &config, seed).unwrap();
    let map = model.importance_map();
    (0..benchgen::CAUSAL_VARIABLES)
        .map(|j| {
            let (_, var) = PsiLaw::for_variable(&map, &model.posterior, &x, j).unwrap().moments().unwrap();
            var.sqrt()
        })
        .collect()
}

fn contraction() -> Verdict {
    let shrunk = (0..20u64)
        .into_par_iter()
        .filter(|&seed| {
            let small = causal_psi_sd(100, seed);
            let large = causal_psi_sd(1600, seed);
            large.iter().zip(&small).all(|(l, s)| l < s)
        })
        .count();
    verdict(
        shrunk >= 18,
        format!("additive_basis, linear, d=10: every causal sd smaller at n=1600 than n=100 in {shrunk}/20 seeds (>= 18)"),
    )
}

// --------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "primal-dual exactness", primal_dual),
        (2, "minibatch correctness", minibatches),
        (3, "importance moment oracle", moment_oracle),
        (4, "gradient fidelity", gradient_fidelity),
        (5, "mixture benchmark reproduction", mixture_reproduction),
        (6, "linear generator sanity", linear_sanity),
        (7, "posterior contraction", contraction),
        (8, "survival-curve identity", survival_identity),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("FEATGP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut bad = Vec::new();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let expected_failure = EXPECTED_FAILURES.contains(&id);
        let label = match (v.pass, expected_failure) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id} {name}: {label} | {} | {:.1}s",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if v.pass == expected_failure || (strict && !v.pass) {
            bad.push(id);
        }
        if v.pass && expected_failure {
            println!("criterion {id} now passes; remove it from EXPECTED_FAILURES");
        }
    }
    if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected acceptance outcome for criteria {bad:?}");
        ExitCode::FAILURE
    }
}
