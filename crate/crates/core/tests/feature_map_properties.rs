use featgp_core::feature_maps::{
    contrast_features, evaluate, partial, AdditiveBasisMap, AdditiveBlock, AnyMap, ConcatenatedMap, FeatureMap, RandomFourierMap,
    SoftTreeMap, TreeMode, VariableRole,
};
use featgp_core::rng::stream;
use featgp_core::tree_learner::{fit_tree_with_seed, SplitCandidates, TreeConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn uniform_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, 0);
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
}

fn response(x: &DMatrix<f64>) -> Vec<f64> {
    x.row_iter().map(|r| r[0].sin() + r[1] * r[1] - 0.5 * r[2]).collect()
}

fn fitted_tree_map(seed: u64, leaves: usize) -> SoftTreeMap {
    let x = uniform_matrix(120, 3, seed);
    let y = response(&x);
    let config = TreeConfig {
        max_leaf_nodes: leaves,
        candidates: SplitCandidates::PerFeature,
    };
    let tree = fit_tree_with_seed(&x, &y, &config, seed).unwrap();
    tree.feature_map(vec![VariableRole::Continuous; 3], 1.0, 0.1).unwrap()
}

fn thresholds(map: &SoftTreeMap) -> Vec<(usize, f64)> {
    map.leaves()
        .iter()
        .flat_map(|l| l.conditions.iter().map(|c| (c.feature, c.threshold)))
        .collect()
}

fn far_from_thresholds(x: &[f64], cuts: &[(usize, f64)], margin: f64) -> bool {
    cuts.iter().all(|&(j, a)| (x[j] - a).abs() >= margin)
}

fn rbf(x: &[f64], z: &[f64], ell: f64) -> f64 {
    let r2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-r2 / (2.0 * ell * ell)).exp()
}

fn central_difference<M: FeatureMap>(map: &M, x: &[f64], j: usize, h: f64) -> Vec<f64> {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[j] += h;
    down[j] -= h;
    let a = evaluate(map, &up).unwrap();
    let b = evaluate(map, &down).unwrap();
    a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
}

/// Relative error of the analytic gradient against central differences,
/// measured on the whole feature vector.
fn gradient_error<M: FeatureMap>(map: &M, x: &[f64], j: usize) -> f64 {
    let exact = partial(map, x, j).unwrap();
    let numeric = central_difference(map, x, j, 1e-5);
    let diff: f64 = exact.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

#[test]
fn kernel_recovery_in_hard_mode() {
    let map = fitted_tree_map(3, 12);
    let x = uniform_matrix(60, 3, 99);
    for a in x.row_iter() {
        let a: Vec<f64> = a.iter().copied().collect();
        let fa = evaluate(&map, &a).unwrap();
        for b in x.row_iter().take(10) {
            let b: Vec<f64> = b.iter().copied().collect();
            let fb = evaluate(&map, &b).unwrap();
            let k: f64 = fa.iter().zip(&fb).map(|(p, q)| p * q).sum();
            let same_leaf = map.leaves().iter().any(|l| l.holds(&a) && l.holds(&b));
            assert_eq!(k, if same_leaf { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn random_fourier_kernel_error_halves_when_features_quadruple() {
    let ell = 1.5;
    let pairs = uniform_matrix(200, 3, 5);
    let mean_error = |dim: usize| {
        // average over independent feature draws to stabilize the comparison
        let mut total = 0.0;
        let draws = 20;
        for rep in 0..draws {
            let map = RandomFourierMap::with_seed(3, dim, ell, 1000 + rep).unwrap();
            for p in 0..100 {
                let a: Vec<f64> = pairs.row(2 * p).iter().copied().collect();
                let b: Vec<f64> = pairs.row(2 * p + 1).iter().copied().collect();
                let fa = evaluate(&map, &a).unwrap();
                let fb = evaluate(&map, &b).unwrap();
                let k: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
                total += (k - rbf(&a, &b, ell)).abs();
            }
        }
        total / (100 * draws) as f64
    };
    let coarse = mean_error(100);
    let fine = mean_error(400);
    let ratio = fine / coarse;
    assert!((0.25..=0.75).contains(&ratio), "ratio {ratio}");
}

#[test]
fn soft_tree_gradients_match_finite_differences() {
    let mut rng = stream(11, 1);
    let mut checked = 0;
    for seed in 0..5 {
        let map = fitted_tree_map(seed, 20).with_mode(TreeMode::Soft);
        let cuts = thresholds(&map);
        while checked < 20 * (seed as usize + 1) {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            if !far_from_thresholds(&x, &cuts, 1e-3) {
                continue;
            }
            for j in 0..3 {
                assert!(gradient_error(&map, &x, j) < 1e-4);
            }
            checked += 1;
        }
    }
}

#[test]
fn random_fourier_gradients_match_finite_differences() {
    let map = RandomFourierMap::with_seed(4, 64, 1.3, 2).unwrap();
    let mut rng = stream(12, 1);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        for j in 0..4 {
            assert!(gradient_error(&map, &x, j) < 1e-4);
        }
    }
}

#[test]
fn additive_gradients_match_finite_differences() {
    let train = uniform_matrix(300, 3, 21);
    let map = AdditiveBasisMap::fit(&train, vec![VariableRole::Continuous; 3], 10).unwrap();
    let knots: Vec<(usize, f64)> = map
        .blocks()
        .iter()
        .enumerate()
        .flat_map(|(j, b)| match b {
            AdditiveBlock::Spline { knots } => knots.iter().map(|&k| (j, k)).collect::<Vec<_>>(),
            _ => Vec::new(),
        })
        .collect();
    let mut rng = stream(13, 1);
    let mut checked = 0;
    while checked < 100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.9..1.9)).collect();
        if !far_from_thresholds(&x, &knots, 1e-3) {
            continue;
        }
        for j in 0..3 {
            assert!(gradient_error(&map, &x, j) < 1e-4);
        }
        checked += 1;
    }
}

#[test]
fn contrast_equals_derivative_for_maps_linear_in_the_variable() {
    // the additive basis treats a binary column as one linear feature, so the
    // (1, 0) contrast of the binary column equals the derivative of the same
    // map with that column declared continuous
    let mut rng = stream(31, 0);
    let x = DMatrix::from_fn(80, 2, |_, j| if j == 0 { rng.random_range(-1.0..1.0) } else { rng.random_range(0..2) as f64 });
    let binary = AdditiveBasisMap::fit(&x, vec![VariableRole::Continuous, VariableRole::Binary], 4).unwrap();
    let blocks = binary.blocks().to_vec();
    let continuous = AdditiveBasisMap::from_blocks(vec![VariableRole::Continuous; 2], blocks, None).unwrap();
    for p in [[0.3, 0.0], [-0.7, 1.0]] {
        let contrast = contrast_features(&binary, &p, 1, 1.0, 0.0).unwrap();
        let slope = partial(&continuous, &p, 1).unwrap();
        for (a, b) in contrast.iter().zip(&slope) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn concatenated_map_round_trips_through_any_map() {
    let tree = fitted_tree_map(4, 8).with_mode(TreeMode::Soft);
    let rff = RandomFourierMap::with_seed(3, 16, 2.0, 9).unwrap();
    let concat = ConcatenatedMap::weighted(vec![(0.3, AnyMap::from(tree)), (0.7, AnyMap::from(rff))]).unwrap();
    let x = [0.2, -0.4, 1.1];
    let direct = evaluate(&concat, &x).unwrap();
    let wrapped = AnyMap::from(concat);
    assert_eq!(evaluate(&wrapped, &x).unwrap(), direct);
    assert!(gradient_error(&wrapped, &x, 1) < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hard_tree_output_is_one_hot(seed in 0u64..1000, leaves in 2usize..40) {
        let map = fitted_tree_map(seed, leaves);
        let mut rng = stream(seed, 7);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let phi = evaluate(&map, &x).unwrap();
            prop_assert_eq!(phi.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(phi.iter().filter(|v| **v == 1.0).count(), 1);
        }
    }

    #[test]
    fn soft_tree_approaches_hard_tree(seed in 0u64..1000, leaves in 2usize..30) {
        let hard = fitted_tree_map(seed, leaves);
        let cuts = thresholds(&hard);
        let soft = SoftTreeMap::with_config(
            3,
            vec![VariableRole::Continuous; 3],
            hard.leaves().to_vec(),
            1e6,
            1e6,
            TreeMode::Soft,
        )
        .unwrap();
        let mut rng = stream(seed, 8);
        let mut checked = 0;
        while checked < 200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            if !far_from_thresholds(&x, &cuts, 0.01) {
                continue;
            }
            let a = evaluate(&hard, &x).unwrap();
            let b = evaluate(&soft, &x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-6);
            }
            checked += 1;
        }
    }

    #[test]
    fn soft_tree_entries_are_open_unit_interval(seed in 0u64..1000, x in prop::collection::vec(-2.5f64..2.5, 3)) {
        let map = fitted_tree_map(seed, 10).with_mode(TreeMode::Soft);
        let phi = evaluate(&map, &x).unwrap();
        prop_assert!(phi.iter().all(|v| *v > 0.0 && *v < 1.0));
        prop_assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_fourier_entries_are_bounded(seed in 0u64..1000, x in prop::collection::vec(-10.0f64..10.0, 2)) {
        let map = RandomFourierMap::with_seed(2, 25, 0.7, seed).unwrap();
        let bound = (2.0f64 / 25.0).sqrt();
        let phi = evaluate(&map, &x).unwrap();
        prop_assert!(phi.iter().all(|v| v.abs() <= bound + 1e-15));
    }

    #[test]
    fn additive_partials_stay_in_their_block(seed in 0u64..1000, x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let train = uniform_matrix(100, 3, seed);
        let map = AdditiveBasisMap::fit(&train, vec![VariableRole::Continuous; 3], 6).unwrap();
        for j in 0..3 {
            let range = map.block_range(j);
            let d = partial(&map, &x, j).unwrap();
            for (k, v) in d.iter().enumerate() {
                if !range.contains(&k) {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn map_documents_round_trip_bit_exactly(seed in 0u64..1000) {
        let maps = [
            AnyMap::from(fitted_tree_map(seed, 9).with_mode(TreeMode::Soft)),
            AnyMap::from(RandomFourierMap::with_seed(3, 7, 1.1, seed).unwrap()),
        ];
        for map in maps {
            let text = serde_json::to_string(&map).unwrap();
            let back: AnyMap = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &map);
        }
    }
}
