#![allow(clippy::excessive_precision)]

use super::*;
use ndarray::array;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn assert_close(a: f64, b: f64, tol: f64) {
    let scale = 1.0 + a.abs().max(b.abs());
    assert!(
        (a - b).abs() <= tol * scale,
        "{a} vs {b} differ by {}",
        (a - b).abs()
    );
}

/// 6x4 two-class instance; expectations computed by a direct-summation
/// oracle evaluating r_ij and Var(r_ij) term by term.
fn corr_instance() -> (ndarray::Array2<f64>, Vec<usize>) {
    (
        array![
            [1.0, 2.0, 0.0, 3.0],
            [2.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 2.0, 2.0],
            [5.0, 4.0, 3.0, 0.0],
            [4.0, 6.0, 2.0, 1.0],
            [3.0, 5.0, 4.0, 2.0],
        ],
        vec![0, 0, 0, 1, 1, 1],
    )
}

#[test]
fn frozen_correlation_instance() {
    let (data, labels) = corr_instance();
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    assert_close(corr.lambda(), 0.2855384615384616, 1e-12);
    let r = corr.materialize();
    let expected = array![
        [1.0, 0.0, -0.35723076923076924, -0.5358461538461539],
        [0.0, 1.0, -0.5358461538461539, 0.35723076923076924],
        [-0.35723076923076924, -0.5358461538461539, 1.0, 0.0],
        [-0.5358461538461539, 0.35723076923076924, 0.0, 1.0],
    ];
    for i in 0..4 {
        for j in 0..4 {
            assert_close(r[(i, j)], expected[(i, j)], 1e-12);
        }
        assert_eq!(r[(i, i)], 1.0);
    }
}

#[test]
fn frozen_variance_instance() {
    let data = array![
        [1.0, 2.0, 30.0],
        [2.0, 4.0, 10.0],
        [3.0, 3.0, 20.0],
        [0.0, 1.0, 40.0],
        [5.0, 2.0, 0.0],
        [6.0, 4.0, 10.0],
        [4.0, 3.0, 30.0],
        [7.0, 5.0, 20.0],
    ];
    let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let shrunk = shrink_variances(data.view(), &labels).unwrap();
    assert_close(shrunk.lambda_var, 0.06854958276108554, 1e-12);
    assert_close(shrunk.median_target, 1.6666666666666667, 1e-14);
    assert_close(shrunk.values[0], 1.6666666666666667, 1e-12);
    assert_close(shrunk.values[1], 1.6666666666666667, 1e-12);
    assert_close(shrunk.values[2], 155.35598551108754, 1e-12);
}

#[test]
fn single_feature_forces_identity_target() {
    let data = array![[1.0], [2.0], [4.0], [0.0], [3.0], [5.0]];
    let labels = vec![0, 0, 0, 1, 1, 1];
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    assert_eq!(corr.lambda(), 1.0);
    let r = corr.materialize();
    assert_eq!(r[(0, 0)], 1.0);
}

#[test]
fn orthogonal_columns_give_identity_for_any_lambda() {
    // Pooled variances are exactly 1, so the standardized entries stay
    // integers and the within-class products cancel exactly even under
    // fused multiply-add kernels.
    let data = array![
        [1.0, 1.0],
        [-1.0, 1.0],
        [1.0, -1.0],
        [-1.0, -1.0],
        [0.0, 0.0]
    ];
    let labels = vec![0, 0, 0, 0, 0];
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    assert_eq!(corr.lambda(), 1.0, "zero denominator forces full shrinkage");
    for lambda in [0.0, 0.3, 0.7] {
        let forced = corr.with_lambda(lambda).unwrap();
        let r = forced.materialize();
        assert_eq!(r[(0, 1)], 0.0);
        assert_eq!(r[(1, 0)], 0.0);
        assert_eq!(r[(0, 0)], 1.0);
        assert_eq!(r[(1, 1)], 1.0);
    }
}

#[test]
fn equal_variances_shrink_to_target_exactly() {
    // Identical columns up to sign flips: equal pooled variances.
    let data = array![
        [1.0, -1.0, 2.0],
        [3.0, -3.0, 4.0],
        [2.0, -2.0, 3.0],
        [0.0, 0.0, 1.0],
        [4.0, -4.0, 5.0],
        [1.0, -1.0, 2.0],
    ];
    let labels = vec![0, 0, 0, 1, 1, 1];
    let shrunk = shrink_variances(data.view(), &labels).unwrap();
    let expected = shrunk.median_target;
    for &v in &shrunk.values {
        assert_eq!(v, expected, "equal empirical variances must stay put");
    }
}

#[test]
fn variance_intensity_clips_at_one() {
    // Tiny spread between variances, noisy columns: Var-hat dominates.
    let data = array![
        [10.0, -10.0],
        [-10.0, 10.0],
        [10.0, 10.0],
        [-10.0, -10.05],
        [10.0, 10.0],
        [-10.0, -10.0],
    ];
    let labels = vec![0, 0, 0, 1, 1, 1];
    let shrunk = shrink_variances(data.view(), &labels).unwrap();
    assert_eq!(shrunk.lambda_var, 1.0);
    for &v in &shrunk.values {
        assert_eq!(v, shrunk.median_target);
    }
}

#[test]
fn frequencies_balanced_and_near_balanced() {
    let f = shrink_frequencies(&[50, 50]).unwrap();
    assert_eq!(f.lambda_freq, 1.0);
    assert_eq!(f.values, vec![0.5, 0.5]);

    // (3, 1): numerator 6/16, denominator 3 * 2/16 -> intensity exactly 1.
    let f = shrink_frequencies(&[3, 1]).unwrap();
    assert_eq!(f.lambda_freq, 1.0);
    assert_eq!(f.values, vec![0.5, 0.5]);

    // (52, 50): the raw intensity exceeds one and is clipped, so the
    // estimate hits the uniform target; it stays inside the closed
    // interval between the empirical frequency and 1/K.
    let f = shrink_frequencies(&[52, 50]).unwrap();
    assert_eq!(f.lambda_freq, 1.0);
    let sum: f64 = f.values.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    for (&v, &c) in f.values.iter().zip(&[52usize, 50]) {
        let emp = c as f64 / 102.0;
        let (lo, hi) = (emp.min(0.5), emp.max(0.5));
        assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
    }
}

#[test]
fn frequencies_partial_shrinkage_hand_value() {
    // counts (7, 3): intensity 7/12, estimates (7/12, 5/12).
    let f = shrink_frequencies(&[7, 3]).unwrap();
    assert_close(f.lambda_freq, 7.0 / 12.0, 1e-14);
    assert_close(f.values[0], 7.0 / 12.0, 1e-14);
    assert_close(f.values[1], 5.0 / 12.0, 1e-14);
}

#[test]
fn frequencies_reject_empty_class() {
    assert!(matches!(
        shrink_frequencies(&[4, 0]).unwrap_err(),
        Error::ClassTooSmall { .. }
    ));
}

#[test]
fn identity_apply_is_exact() {
    let (data, labels) = corr_instance();
    let corr = shrink_correlations(data.view(), &labels)
        .unwrap()
        .with_lambda(1.0)
        .unwrap();
    let v = array![1.0, -2.5, 0.25, 7.0];
    let out = corr.apply_inv_sqrt(v.view()).unwrap();
    assert_eq!(out, v);
    let out = corr.apply_inverse(v.view()).unwrap();
    assert_eq!(out, v);
}

#[test]
fn two_feature_closed_form_inverse_sqrt() {
    let data = array![[1.0, 1.0], [2.0, 3.0], [3.0, 2.0], [4.0, 5.0], [5.0, 4.0]];
    let labels = vec![0usize; 5];
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    assert!(corr.lambda() > 0.0 && corr.lambda() < 1.0);
    let rho = corr.materialize()[(0, 1)];
    // Eigenvalues 1 +- rho with eigenvectors (1, 1)/sqrt(2), (1, -1)/sqrt(2).
    let alpha = (1.0 + rho).powf(-0.5);
    let beta = (1.0 - rho).powf(-0.5);
    let (a, b) = ((alpha + beta) / 2.0, (alpha - beta) / 2.0);
    let v = array![0.7, -1.3];
    let expected = array![a * v[0] + b * v[1], b * v[0] + a * v[1]];
    let got = corr.apply_inv_sqrt(v.view()).unwrap();
    assert_close(got[0], expected[0], 1e-12);
    assert_close(got[1], expected[1], 1e-12);
}

#[test]
fn applying_inv_sqrt_twice_equals_inverse() {
    let (data, labels) = corr_instance();
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    let v = array![0.3, -1.0, 2.0, 0.5];
    let twice = corr
        .apply_inv_sqrt(corr.apply_inv_sqrt(v.view()).unwrap().view())
        .unwrap();
    let once = corr.apply_inverse(v.view()).unwrap();
    let num: f64 = (&twice - &once).iter().map(|d| d * d).sum::<f64>().sqrt();
    let den: f64 = once.iter().map(|d| d * d).sum::<f64>().sqrt();
    assert!(num / den < 1e-8, "relative error {}", num / den);
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    k: usize,
) -> (ndarray::Array2<f64>, Vec<usize>) {
    let data = ndarray::Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    (data, labels)
}

#[test]
fn fast_path_matches_dense_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(n, p, k) in &[
        (10usize, 30usize, 2usize),
        (20, 5, 2),
        (15, 15, 3),
        (8, 60, 2),
        (12, 200, 3),
    ] {
        let (data, labels) = random_instance(&mut rng, n, p, k);
        let corr = shrink_correlations(data.view(), &labels).unwrap();
        let v: ndarray::Array1<f64> = (0..p)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fast = corr.apply_inv_sqrt(v.view()).unwrap();
        let dense = corr.apply_inv_sqrt_dense(v.view()).unwrap();
        let num: f64 = (&fast - &dense).iter().map(|d| d * d).sum::<f64>().sqrt();
        let den: f64 = dense.iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(
            num / den < 1e-8,
            "n={n} p={p} k={k}: relative error {}",
            num / den
        );
    }
}

#[test]
fn unshrunk_singular_matrix_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // p > n - K: empirical correlation is rank deficient.
    let (data, labels) = random_instance(&mut rng, 8, 20, 2);
    let corr = shrink_correlations_with_lambda(data.view(), &labels, 0.0).unwrap();
    let v = ndarray::Array1::zeros(20);
    assert!(matches!(
        corr.apply_inv_sqrt(v.view()).unwrap_err(),
        Error::SingularCorrelation
    ));

    // Full rank without shrinkage works and matches the dense route.
    let (data, labels) = random_instance(&mut rng, 30, 6, 2);
    let corr = shrink_correlations_with_lambda(data.view(), &labels, 0.0).unwrap();
    let v: ndarray::Array1<f64> = (0..6)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fast = corr.apply_inv_sqrt(v.view()).unwrap();
    let dense = corr.apply_inv_sqrt_dense(v.view()).unwrap();
    for (f, d) in fast.iter().zip(dense.iter()) {
        assert_close(*f, *d, 1e-8);
    }
}

#[test]
fn spectrum_is_floored_at_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (data, labels) = random_instance(&mut rng, 10, 25, 2);
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    let (lo, hi) = corr.spectrum_bounds();
    assert!(lo >= corr.lambda() - 1e-12, "smallest eigenvalue {lo}");
    assert!(hi >= lo);
}

#[test]
fn shrinkage_vanishes_with_large_samples() {
    // Consistency holds when the truth is away from the targets, so draw
    // genuinely correlated features with distinct scales. (For exactly
    // independent equal-scale features the intensities correctly tend to
    // one instead: the target is then the truth.)
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    let p = 5;
    let scales = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut data = ndarray::Array2::<f64>::zeros((n, p));
    for mut row in data.rows_mut() {
        let shared: f64 = rng.sample(StandardNormal);
        for (j, x) in row.iter_mut().enumerate() {
            let own: f64 = rng.sample(StandardNormal);
            *x = scales[j] * (shared + own);
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let corr = shrink_correlations(data.view(), &labels).unwrap();
    let vars = shrink_variances(data.view(), &labels).unwrap();
    assert!(corr.lambda() < 0.05, "lambda_corr = {}", corr.lambda());
    assert!(vars.lambda_var < 0.05, "lambda_var = {}", vars.lambda_var);
}

#[test]
fn constant_feature_is_a_hard_error() {
    let data = array![
        [1.0, 5.0],
        [2.0, 5.0],
        [3.0, 5.0],
        [4.0, 5.0],
        [5.0, 5.0],
        [6.0, 5.0],
    ];
    let labels = vec![0, 0, 0, 1, 1, 1];
    assert!(matches!(
        shrink_correlations(data.view(), &labels).unwrap_err(),
        Error::ConstantFeature { index: 1 }
    ));
    assert!(matches!(
        shrink_variances(data.view(), &labels).unwrap_err(),
        Error::ConstantFeature { index: 1 }
    ));
}

#[test]
fn sample_count_preconditions() {
    let data = array![[1.0, 2.0], [3.0, 4.0]];
    assert!(matches!(
        shrink_correlations(data.view(), &[0, 1]).unwrap_err(),
        Error::TooFewSamples { needed: 3, .. }
    ));
    let data = array![[1.0], [2.0], [3.0]];
    // n == K leaves no residual degrees of freedom.
    assert!(shrink_variances(data.view(), &[0, 1, 2]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn intensities_stay_in_unit_interval(seed in 0u64..1000, n in 4usize..20, p in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, labels) = random_instance(&mut rng, n, p, 2);
        if let Ok(corr) = shrink_correlations(data.view(), &labels) {
            prop_assert!((0.0..=1.0).contains(&corr.lambda()));
        }
        if let Ok(vars) = shrink_variances(data.view(), &labels) {
            prop_assert!((0.0..=1.0).contains(&vars.lambda_var));
            let med = vars.median_target;
            // Recover empirical variances to test the sandwich bound.
            let stats = class_center(data.view(), &labels).unwrap();
            let v = pooled_variances(stats.centered.view(), 2).unwrap();
            for (sv, vi) in vars.values.iter().zip(&v) {
                prop_assert!(*sv >= vi.min(med) && *sv <= vi.max(med));
                prop_assert!(*sv > 0.0);
            }
        }
    }

    #[test]
    fn frequencies_sum_to_one_and_commute_with_permutation(
        counts in proptest::collection::vec(1usize..60, 2..6)
    ) {
        let f = shrink_frequencies(&counts).unwrap();
        let sum: f64 = f.values.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f.lambda_freq));
        let mut reversed = counts.clone();
        reversed.reverse();
        let g = shrink_frequencies(&reversed).unwrap();
        for (a, b) in f.values.iter().zip(g.values.iter().rev()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
