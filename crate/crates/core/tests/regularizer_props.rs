mod common;

use bregman_ot::regularizers::{
    composite_grad, composite_value, group_lasso_grad, group_lasso_value, temporal_grad,
    temporal_value, DEFAULT_ZERO_NORM_FLOOR,
};
use bregman_ot::{ClassGroups, RegularizerSpec, TemporalAnchor};
use common::{finite_difference, frobenius, group_lasso_ref, relative_error, temporal_ref};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// Plan `n×m`, targets `m×d`, previous image `n×d` and row scale.
fn temporal_case() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, Array2<f64>, f64)> {
    (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(n, m, d)| {
        (
            matrix(n, m, 0.01, 1.0),
            matrix(m, d, -2.0, 2.0),
            matrix(n, d, -2.0, 2.0),
            0.5f64..5.0,
        )
    })
}

/// Plan with labels where every class is present.
fn labeled_plan(lo: f64) -> impl Strategy<Value = (Array2<f64>, Vec<usize>)> {
    (2usize..7, 1usize..6, 1usize..4).prop_flat_map(move |(n, m, classes)| {
        (
            matrix(n, m, lo, 1.0),
            prop::collection::vec(0..classes, n),
        )
    })
}

#[test]
fn temporal_examples() {
    let x = array![[1.0, 0.0], [0.0, 1.0]];
    let prev = array![[0.5, 0.0], [0.0, 0.5]];
    let anchor = TemporalAnchor::new(x.clone(), prev.clone(), 2.0).unwrap();
    let plan = array![[0.25, 0.0], [0.0, 0.25]];
    // s·γX = P exactly.
    assert!(temporal_value(plan.view(), &anchor).unwrap().abs() < 1e-15);
    let plan = array![[0.5, 0.0], [0.0, 0.0]];
    let want = temporal_ref(&plan, &x, &prev, 2.0);
    assert!((temporal_value(plan.view(), &anchor).unwrap() - want).abs() < 1e-14);
    assert!((want - 0.25 - 0.25).abs() < 1e-14);
}

#[test]
fn smoothness_bound_matches_closed_form_eigenvalue() {
    let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
    let anchor = TemporalAnchor::new(x.clone(), Array2::zeros((4, 2)), 3.0).unwrap();
    let g = x.t().dot(&x);
    let top = common::top_eigenvalue_2x2(g[[0, 0]], g[[0, 1]], g[[1, 1]]);
    assert!((anchor.smoothness_bound() - 2.0 * 9.0 * top).abs() < 1e-9 * top);
}

#[test]
fn group_lasso_examples() {
    let groups = ClassGroups::from_labels(&[0, 0, 1]);
    let plan = array![[3.0, 0.0], [4.0, 1.0], [2.0, 0.0]];
    assert!((group_lasso_value(plan.view(), &groups).unwrap() - (5.0 + 2.0 + 1.0)).abs() < 1e-14);
    // A zero block contributes a zero subgradient.
    let g = group_lasso_grad(plan.view(), &groups, DEFAULT_ZERO_NORM_FLOOR).unwrap();
    assert_eq!(g[[2, 1]], 0.0);
    assert!((g[[0, 0]] - 0.6).abs() < 1e-14 && (g[[1, 0]] - 0.8).abs() < 1e-14);
}

#[test]
fn groups_must_partition_rows() {
    assert!(ClassGroups::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
    assert!(ClassGroups::new(vec![vec![0], vec![2]], 3).is_err());
    assert!(ClassGroups::new(vec![vec![0, 2], vec![1]], 3).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn temporal_value_matches_reference((plan, x, prev, s) in temporal_case()) {
        let anchor = TemporalAnchor::new(x.clone(), prev.clone(), s).unwrap();
        let got = temporal_value(plan.view(), &anchor).unwrap();
        let want = temporal_ref(&plan, &x, &prev, s);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn temporal_grad_matches_finite_differences((plan, x, prev, s) in temporal_case()) {
        let anchor = TemporalAnchor::new(x.clone(), prev.clone(), s).unwrap();
        let g = temporal_grad(plan.view(), &anchor).unwrap();
        let fd = finite_difference(&plan, 1e-7, |p| temporal_ref(p, &x, &prev, s));
        if frobenius(&fd) > 1e-6 {
            prop_assert!(relative_error(&g, &fd) < 1e-6, "{}", relative_error(&g, &fd));
        } else {
            prop_assert!(frobenius(&(&g - &fd)) < 1e-6);
        }
    }

    #[test]
    fn temporal_value_convex_on_segments(
        (a, b, x, prev, s) in (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(n, m, d)| {
            (
                matrix(n, m, 0.0, 1.0),
                matrix(n, m, 0.0, 1.0),
                matrix(m, d, -2.0, 2.0),
                matrix(n, d, -2.0, 2.0),
                0.5f64..5.0,
            )
        })
    ) {
        let anchor = TemporalAnchor::new(x, prev, s).unwrap();
        let fa = temporal_value(a.view(), &anchor).unwrap();
        let fb = temporal_value(b.view(), &anchor).unwrap();
        for tau in [0.25, 0.5, 0.75] {
            let mid = &a * tau + &b * (1.0 - tau);
            let fm = temporal_value(mid.view(), &anchor).unwrap();
            prop_assert!(fm <= tau * fa + (1.0 - tau) * fb + 1e-10);
        }
    }

    #[test]
    fn temporal_gradient_lipschitz_within_bound(
        (a, b, x, prev, s) in (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(n, m, d)| {
            (
                matrix(n, m, 0.0, 1.0),
                matrix(n, m, 0.0, 1.0),
                matrix(m, d, -2.0, 2.0),
                matrix(n, d, -2.0, 2.0),
                0.5f64..5.0,
            )
        })
    ) {
        let anchor = TemporalAnchor::new(x, prev, s).unwrap();
        let bound = anchor.smoothness_bound();
        let ga = temporal_grad(a.view(), &anchor).unwrap();
        let gb = temporal_grad(b.view(), &anchor).unwrap();
        let dist = frobenius(&(&a - &b));
        prop_assume!(dist > 1e-12);
        let ratio = frobenius(&(&ga - &gb)) / dist;
        prop_assert!(ratio <= bound * (1.0 + 1e-6), "{ratio} > {bound}");
    }

    #[test]
    fn group_lasso_matches_reference((plan, labels) in labeled_plan(0.0)) {
        let groups = ClassGroups::from_labels(&labels);
        let got = group_lasso_value(plan.view(), &groups).unwrap();
        let want = group_lasso_ref(&plan, &labels);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn group_lasso_grad_matches_finite_differences((plan, labels) in labeled_plan(0.01)) {
        let groups = ClassGroups::from_labels(&labels);
        let g = group_lasso_grad(plan.view(), &groups, DEFAULT_ZERO_NORM_FLOOR).unwrap();
        let fd = finite_difference(&plan, 1e-7, |p| group_lasso_ref(p, &labels));
        prop_assert!(relative_error(&g, &fd) < 1e-5, "{}", relative_error(&g, &fd));
    }

    #[test]
    fn group_lasso_positively_homogeneous((plan, labels) in labeled_plan(0.0), c in 0.01f64..100.0) {
        let groups = ClassGroups::from_labels(&labels);
        let v = group_lasso_value(plan.view(), &groups).unwrap();
        let scaled = group_lasso_value((&plan * c).view(), &groups).unwrap();
        prop_assert!((scaled - c * v).abs() <= 1e-10 * (1.0 + c * v));
    }

    #[test]
    fn composite_is_weighted_sum(
        (plan, x, prev, s) in temporal_case(),
        w1 in 0.0f64..10.0,
        w2 in 0.0f64..10.0,
    ) {
        let n = plan.nrows();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let anchor = TemporalAnchor::new(x.clone(), prev.clone(), s).unwrap();
        let regs = vec![
            RegularizerSpec::group_lasso(ClassGroups::from_labels(&labels), w1).unwrap(),
            RegularizerSpec::temporal(anchor, w2).unwrap(),
        ];
        let v = composite_value(plan.view(), &regs).unwrap();
        let want = w1 * group_lasso_ref(&plan, &labels) + w2 * temporal_ref(&plan, &x, &prev, s);
        prop_assert!((v - want).abs() <= 1e-10 * (1.0 + want));
        let g = composite_grad(plan.view(), &regs).unwrap();
        let fd = finite_difference(&plan, 1e-6, |p| {
            w1 * group_lasso_ref(p, &labels) + w2 * temporal_ref(p, &x, &prev, s)
        });
        if frobenius(&fd) > 1e-4 {
            prop_assert!(relative_error(&g, &fd) < 1e-5);
        }
    }
}
