//! Evaluation metrics against closed forms and brute-force oracles.

use gleams_core::eval::{midpoint_grid, percentile};
use gleams_core::{
    build_surrogate, evaluate_surrogate, expected_restricted_loss, recall_important_features,
    spearman, BlackBox, BuildConfig, EvalConfig, EvalError, FnModel, HyperRectangle,
    IntegrationMode, LinearFunction,
};
use proptest::prelude::*;

/// Spearman correlation by brute force: ranks as `1 + #smaller + (#equal - 1) / 2`.
fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let smaller = v.iter().filter(|y| *y < x).count() as f64;
                let equal = v.iter().filter(|y| *y == x).count() as f64;
                1.0 + smaller + (equal - 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn quadratic_loss_matches_closed_form() {
    // f(x) = x on [0, 1] from xi = 0.5: E[(0.5 - x)^2] = 1/12.
    let bb = BlackBox::new(LinearFunction::new(vec![0.0, 1.0]));
    let loss = expected_restricted_loss(&bb, &[0.5], 0.5, 0, (0.0, 1.0), 101).unwrap();
    assert!((loss - 1.0 / 12.0).abs() < 1e-4);
    assert_eq!(bb.query_count(), 101);
}

#[test]
fn grid_doubling_changes_smooth_losses_little() {
    let bb = BlackBox::new(FnModel::new(2, |x: &[f64]| {
        (3.0 * x[0]).sin() + x[0] * x[1]
    }));
    for xi in [[0.1f64, 0.2], [0.5, 0.9], [0.95, 0.4]] {
        let fx = (3.0 * xi[0]).sin() + xi[0] * xi[1];
        for j in 0..2 {
            let a = expected_restricted_loss(&bb, &xi, fx, j, (0.0, 1.0), 101).unwrap();
            let b = expected_restricted_loss(&bb, &xi, fx, j, (0.0, 1.0), 202).unwrap();
            assert!((a - b).abs() <= 0.01 * a.abs(), "{a} vs {b}");
        }
    }
}

#[test]
fn midpoint_grid_is_centred() {
    assert_eq!(midpoint_grid(0.0, 1.0, 4), vec![0.125, 0.375, 0.625, 0.875]);
}

#[test]
fn invalid_loss_arguments_are_rejected() {
    let bb = BlackBox::new(LinearFunction::new(vec![0.0, 1.0]));
    assert!(matches!(
        expected_restricted_loss(&bb, &[0.5], 0.5, 0, (0.0, 1.0), 1),
        Err(EvalError::GridTooSmall(1))
    ));
    assert!(matches!(
        expected_restricted_loss(&bb, &[0.5], 0.5, 3, (0.0, 1.0), 10),
        Err(EvalError::FeatureOutOfRange { .. })
    ));
    assert!(matches!(
        expected_restricted_loss(&bb, &[0.5], 0.5, 0, (1.0, 0.0), 10),
        Err(EvalError::BadInterval(..))
    ));
    assert_eq!(bb.query_count(), 0);
}

#[test]
fn recall_of_two_relevant_features() {
    let f = FnModel::new(5, |x: &[f64]| {
        3.0 * x[1] - 2.0 * x[3] + if x[1] > 0.5 { x[3] } else { 0.0 }
    });
    let bb = BlackBox::new(f);
    let domain = HyperRectangle::unit(5).unwrap();
    let tree = build_surrogate(&bb, &domain, &BuildConfig::default().with_log2_points(12)).unwrap();
    let points: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            (0..5)
                .map(|j| ((i * 7 + j * 3) % 19) as f64 / 19.0 + 0.01)
                .collect()
        })
        .collect();
    let cfg = EvalConfig {
        integration_mode: IntegrationMode::Global,
        grid_size: 11,
        true_features: Some(vec![1, 3]),
    };
    let report = evaluate_surrogate(&tree, &bb, &points, &cfg).unwrap();
    assert_eq!(report.recall.unwrap().mean, 1.0);
    assert!(report.local_monotonicity.is_none());
}

#[test]
fn evaluation_issues_exactly_the_announced_queries() {
    let bb = BlackBox::new(FnModel::new(3, |x: &[f64]| x[0] * x[1] + x[2].powi(2)));
    let tree = build_surrogate(
        &bb,
        &HyperRectangle::unit(3).unwrap(),
        &BuildConfig::default().with_log2_points(10),
    )
    .unwrap();
    let points = vec![
        vec![0.2, 0.3, 0.4],
        vec![0.9, 0.1, 0.5],
        vec![0.5, 0.5, 0.5],
    ];
    for (mode, blocks) in [
        (IntegrationMode::Local, 1),
        (IntegrationMode::Global, 1),
        (IntegrationMode::Both, 2),
    ] {
        let before = bb.query_count();
        let cfg = EvalConfig {
            integration_mode: mode,
            grid_size: 17,
            true_features: None,
        };
        let report = evaluate_surrogate(&tree, &bb, &points, &cfg).unwrap();
        let expected = 3 * (3 * 17 * blocks + 1);
        assert_eq!(report.query_count, expected as u64);
        assert_eq!(bb.query_count() - before, expected as u64);
    }
    assert!(matches!(
        evaluate_surrogate(&tree, &bb, &[], &EvalConfig::default()),
        Err(EvalError::NoTestPoints)
    ));
}

#[test]
fn recall_validates_feature_sets() {
    assert!(matches!(
        recall_important_features(&[1.0, 2.0], &[]),
        Err(EvalError::EmptyFeatureSet)
    ));
    assert!(matches!(
        recall_important_features(&[1.0, 2.0], &[0, 0]),
        Err(EvalError::DuplicateFeature(0))
    ));
    assert!(recall_important_features(&[1.0, 2.0], &[2]).is_err());
    let r = recall_important_features(&[0.1, -5.0, 3.0, 0.2], &[1, 2]).unwrap();
    assert_eq!(r.value, 1.0);
    assert!(!r.tie);
    let r = recall_important_features(&[1.0, 1.0, 0.0], &[0]).unwrap();
    assert!(r.tie);
}

#[test]
fn percentiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(percentile(&v, 50.0), 3.0);
    assert!((percentile(&v, 5.0) - 1.2).abs() < 1e-12);
    assert!((percentile(&v, 95.0) - 4.8).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spearman_matches_brute_force(
        a in proptest::collection::vec(-3i32..3, 2..12),
        b in proptest::collection::vec(-3i32..3, 12),
    ) {
        let a: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = b[..a.len()].iter().map(|&x| x as f64).collect();
        let got = spearman(&a, &b).unwrap();
        let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
        if constant(&a) || constant(&b) {
            prop_assert!(got.degenerate);
        } else {
            prop_assert!(!got.degenerate);
            prop_assert!((got.value - spearman_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps(
        a in proptest::collection::vec(-10.0f64..10.0, 3..20),
        b in proptest::collection::vec(-10.0f64..10.0, 20),
    ) {
        let b = &b[..a.len()];
        let base = spearman(&a, b).unwrap();
        let mapped: Vec<f64> = a.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
        let cubed: Vec<f64> = b.iter().map(|x| x.powi(3)).collect();
        let other = spearman(&mapped, &cubed).unwrap();
        prop_assert!((base.value - other.value).abs() < 1e-12);
        let flipped: Vec<f64> = a.iter().map(|x| -x).collect();
        prop_assert!((spearman(&flipped, b).unwrap().value + base.value).abs() < 1e-12);
    }
}
