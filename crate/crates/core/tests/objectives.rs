use std::sync::Arc;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;
use resist_core::data::{
    flip_labels, gaussian_blobs, local_logistic, partition_data, BlobSpec, PartitionMode,
};
use resist_core::objectives::*;
use resist_core::rng::{substream, Stream};

fn blobs(per_class: usize, seed: u64) -> resist_core::data::Dataset {
    let spec = BlobSpec {
        classes: 3,
        dim: 2,
        samples_per_class: per_class,
        separation: 2.0,
        spread: 1.0,
    };
    gaussian_blobs(&spec, seed).unwrap()
}

fn random_points(d: usize, n: usize, seed: u64, r: f64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, Stream::Init, &[]);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-r..r)).collect())
        .collect()
}

#[test]
fn quadratic_examples() {
    let same = make_quadratic(&vec![vec![1.5, -2.0]; 4], 0.0).unwrap();
    let (w, f) = centralized_solve(&same, SolveMethod::Auto).unwrap();
    assert_eq!(w, vec![1.5, -2.0]);
    assert_eq!(f, 0.0);

    let two = make_quadratic(&[vec![0.0], vec![2.0]], 0.0).unwrap();
    assert_eq!(
        centralized_solve(&two, SolveMethod::Auto).unwrap().0,
        vec![1.0]
    );
    assert_eq!(two[1].grad(&[2.0]), vec![0.0]);
    assert_eq!(two[0].constants(), Some((1.0, 1.0)));

    // the iterative path agrees with the closed form
    let reg = make_quadratic(&[vec![1.0, 3.0], vec![-2.0, 0.5]], 0.3).unwrap();
    let closed = centralized_solve(&reg, SolveMethod::Auto).unwrap().0;
    let iter = centralized_solve(&reg, SolveMethod::GradientDescent { max_iter: 10_000 })
        .unwrap()
        .0;
    for (a, b) in closed.iter().zip(&iter) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
    assert!(make_quadratic(&[vec![1.0], vec![1.0, 2.0]], 0.0).is_err());
}

#[test]
fn quadratic_average_is_strongly_convex() {
    let targets = random_points(3, 5, 1, 4.0);
    let objs = make_quadratic(&targets, 0.25).unwrap();
    // Hessian of the average is (1 + l2) I
    let avg = Average(&objs);
    struct Avg<'a>(Average<'a>);
    impl Objective for Avg<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn eval(&self, w: &[f64]) -> f64 {
            self.0.eval(w)
        }
        fn grad_into(&self, w: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&self.0.grad(w));
        }
        fn class(&self) -> ObjectiveClass {
            ObjectiveClass::StronglyConvex
        }
    }
    let h = fd_hessian(&Avg(avg), &[0.3, -0.1, 2.0], 1e-4);
    let min_eig = h.symmetric_eigen().eigenvalues.min();
    assert_abs_diff_eq!(min_eig, 1.25, epsilon = 1e-6);
}

#[test]
fn quadratic_gradient_is_exact() {
    let objs = make_quadratic(&random_points(4, 3, 2, 5.0), 0.1).unwrap();
    for o in &objs {
        assert!(finite_diff_check(o.as_ref(), &random_points(4, 10, 3, 5.0), 1e-5).unwrap() < 1e-7);
    }
}

#[test]
fn zero_function_has_zero_error() {
    let zero = Quadratic {
        target: vec![0.0; 3],
        l2: 0.0,
    };
    assert_eq!(
        finite_diff_check(&zero, &[vec![0.0; 3]], 1e-6).unwrap(),
        0.0
    );
}

#[test]
fn logistic_examples() {
    let feats = vec![1.0, 0.5, 1.0, -0.5, 1.0, 2.0, 1.0, -1.0];
    let obj = SoftmaxRegression::new(feats.clone(), vec![0, 1, 0, 1], 2, 2, 1e-3).unwrap();
    assert_abs_diff_eq!(obj.eval(&[0.0; 4]), std::f64::consts::LN_2, epsilon = 1e-15);
    assert!(finite_diff_check(&obj, &random_points(4, 20, 4, 2.0), 1e-6).unwrap() < 1e-5);

    let norm = |l2: f64| {
        let o: SharedObjective =
            Arc::new(SoftmaxRegression::new(feats.clone(), vec![0, 1, 0, 1], 2, 2, l2).unwrap());
        let (w, _) = centralized_solve(&[o], SolveMethod::Auto).unwrap();
        w.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let (small, big) = (norm(0.01), norm(1e4));
    assert!(big < 1e-4 && big < small);
    assert!(SoftmaxRegression::new(feats, vec![0, 1, 0, 1], 2, 2, 0.0).is_err());
}

#[test]
fn logistic_solve_reaches_tolerance() {
    let data = blobs(40, 9);
    let part = partition_data(&data, 1, PartitionMode::Iid, 0).unwrap();
    let objs = local_logistic(&data, &part, 0.01, &[]).unwrap();
    let (w, _) = centralized_solve(&objs, SolveMethod::Auto).unwrap();
    let g = Average(&objs).grad(&w);
    assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < SOLVE_TOL);
}

#[test]
fn logistic_strong_convexity_sampled() {
    let data = blobs(20, 5);
    let part = partition_data(&data, 1, PartitionMode::Iid, 0).unwrap();
    let l2 = 0.05;
    let obj = local_logistic(&data, &part, l2, &[]).unwrap().remove(0);
    let pts = random_points(obj.dim(), 30, 6, 3.0);
    for pair in pts.chunks(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let g = obj.grad(x);
        let lin: f64 = g.iter().zip(y).zip(x).map(|((g, y), x)| g * (y - x)).sum();
        let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(obj.eval(y) >= obj.eval(x) + lin + 0.5 * l2 * d2 - 1e-12);
    }
}

#[test]
fn sine_examples() {
    let f = make_pl_sine();
    assert_eq!(f.eval(&[0.0, 0.0]), 0.0);
    assert_eq!(f.grad(&[0.0, 0.0]), vec![0.0, 0.0]);
    assert_abs_diff_eq!(f.eval(&[0.0, 1.0]), 0.5);
    let g = f.grad(&[0.0, 1.0]);
    assert_abs_diff_eq!(g[0], -1.0);
    assert_abs_diff_eq!(g[1], 1.0);

    let (w, v) = centralized_solve_from(std::slice::from_ref(&f), vec![0.0, 0.5], 10_000).unwrap();
    assert!(v < 1e-12, "{w:?} {v}");

    let pair = make_pl_sum_counterexample();
    let pts = random_points(2, 20, 7, 5.0);
    assert!(finite_diff_check(f.as_ref(), &pts, 1e-6).unwrap() < 1e-5);
    assert!(finite_diff_check(pair.as_ref(), &pts, 1e-6).unwrap() < 1e-5);
}

/// Closed-form minimum and saddle of f + g: minimizing over y leaves
/// (3 - 2 sin(1.5) cos(x - 1.5))^2 / 6.
fn pair_min() -> f64 {
    let s = 1.5f64.sin();
    (3.0 - 2.0 * s).powi(2) / 6.0
}

fn pair_saddle() -> (f64, [f64; 2]) {
    let s = 1.5f64.sin();
    let x = 1.5 + std::f64::consts::PI;
    let y = (2.0 * x.sin() + 3.0 + (x - 3.0).sin()) / 3.0;
    ((3.0 + 2.0 * s).powi(2) / 6.0, [x, y])
}

#[test]
fn counterexample_search_finds_saddle() {
    let pair = make_pl_sum_counterexample();
    let found = find_near_stationary(pair.as_ref(), -2.0, 6.0, 161);
    let global = found.first().unwrap();
    assert_abs_diff_eq!(global.value, pair_min(), epsilon = 1e-9);

    let (saddle_val, saddle) = pair_saddle();
    let cert = found
        .iter()
        .find(|p| p.grad_norm < 1e-3 && p.value - global.value > 0.05)
        .expect("a near-stationary point above the minimum");
    assert_abs_diff_eq!(cert.value, saddle_val, epsilon = 1e-8);
    // the landscape is 2 pi periodic in x
    let tau = 2.0 * std::f64::consts::PI;
    let dx = (cert.point[0] - saddle[0]).rem_euclid(tau);
    assert!(dx.min(tau - dx) < 1e-6, "{:?}", cert.point);
    let y_at = |x: f64| (2.0 * x.sin() + 3.0 + (x - 3.0).sin()) / 3.0;
    assert_abs_diff_eq!(cert.point[1], y_at(cert.point[0]), epsilon = 1e-6);
    assert_abs_diff_eq!(saddle[1], y_at(saddle[0]), epsilon = 1e-15);

    // the PL inequality 0.5 |grad|^2 >= mu (f - f*) fails for mu = 1e-4
    let gap = cert.value - pair_min();
    assert!(0.5 * cert.grad_norm.powi(2) < 1e-4 * gap);
}

#[test]
fn sine_pl_and_smoothness_constants() {
    let f = make_pl_sine();
    // 0.5 |grad|^2 / f = 1 + cos^2 x >= 1
    let mu = estimate_pl_constant(f.as_ref(), 0.0, -2.0, 6.0, 81, 1e-6);
    assert!((1.0 - 1e-9..=1.01).contains(&mu), "{mu}");
    let l = estimate_smoothness(make_pl_sum_counterexample().as_ref(), -2.0, 6.0, 41);
    assert!(l > 1.0 && l.is_finite());
}

#[test]
fn partition_examples() {
    let data = blobs(10, 1);
    for mode in [
        PartitionMode::Iid,
        PartitionMode::Moderate,
        PartitionMode::Extreme,
    ] {
        let p = partition_data(&data, 1, mode, 3).unwrap();
        let mut all = p.nodes[0].clone();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }
    let a = partition_data(&data, 3, PartitionMode::Iid, 11).unwrap();
    assert_eq!(a, partition_data(&data, 3, PartitionMode::Iid, 11).unwrap());
    assert_ne!(a, partition_data(&data, 3, PartitionMode::Iid, 12).unwrap());

    let p = partition_data(&data, 4, PartitionMode::Iid, 0).unwrap();
    assert_eq!((p.per_node, p.truncated), (7, 2));
}

#[test]
fn extreme_and_moderate_label_layout() {
    let spec = BlobSpec {
        classes: 10,
        dim: 1,
        samples_per_class: 60,
        separation: 1.0,
        spread: 1.0,
    };
    let data = gaussian_blobs(&spec, 0).unwrap();
    let ext = partition_data(&data, 50, PartitionMode::Extreme, 0).unwrap();
    for j in 0..5 {
        assert!(ext.nodes[j].iter().all(|&i| data.labels[i] == 0));
    }
    let modr = partition_data(&data, 50, PartitionMode::Moderate, 0).unwrap();
    for node in &modr.nodes {
        let mut labels: Vec<usize> = node.iter().map(|&i| data.labels[i]).collect();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 2);
    }
}

#[test]
fn label_flip() {
    let mut data = blobs(2, 0);
    flip_labels(&mut data);
    assert_eq!(data.labels, vec![2, 2, 1, 1, 0, 0]);
}

proptest! {
    #[test]
    fn partition_preserves_multiset(per_class in 1usize..30, m in 1usize..7, seed in 0u64..100, mode in 0usize..3) {
        let data = blobs(per_class, seed);
        let mode = [PartitionMode::Iid, PartitionMode::Moderate, PartitionMode::Extreme][mode];
        let p = partition_data(&data, m, mode, seed).unwrap();
        prop_assert!(p.nodes.iter().all(|n| n.len() == p.per_node));
        let mut all: Vec<usize> = p.nodes.concat();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len() + p.truncated, data.len());
    }

    #[test]
    fn logistic_gradients_match(seed in 0u64..500) {
        let data = blobs(5, seed);
        let part = partition_data(&data, 1, PartitionMode::Iid, seed).unwrap();
        let obj = local_logistic(&data, &part, 0.1, &[]).unwrap().remove(0);
        prop_assert!(finite_diff_check(obj.as_ref(), &random_points(obj.dim(), 3, seed, 2.0), 1e-6).unwrap() < 1e-5);
    }
}
