use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::Config;

use sophia_lab::autodiff::{value_and_grad, Tape, Var};
use sophia_lab::estimators::{
    exact_hessian_diag, gnb_estimate, hutchinson_estimate, probabilities, sample_moments,
    Estimator, EstimatorKind,
};
use sophia_lab::problems::{make_classifier, make_quadratic, Batch, Problem, SoftmaxClassifier};
use sophia_lab::rng::{stream, Purpose};
use sophia_lab::Tensor;

fn classifier() -> SoftmaxClassifier {
    make_classifier(4, 3, 5, 32, 7).unwrap()
}

fn perturbed(problem: &dyn Problem, raw: &[f64]) -> Tensor {
    let mut theta = problem.initial_params();
    let d = theta.len();
    let shift = Tensor::from_vec((0..d).map(|i| raw[i % raw.len()] * (i as f64 + 0.5).sin()).collect());
    theta.axpy(1.0, &shift);
    theta
}

/// Gradient of the cross-entropy of one example with its label forced to `y`.
fn label_grad(problem: &SoftmaxClassifier, theta: &Tensor, example: &Batch, y: usize) -> Tensor {
    let b = example.relabel(Arc::from(vec![y]));
    value_and_grad(|t: &mut Tape, p: Var| problem.loss(t, p, &b), theta).unwrap().1
}

proptest! {
    #![proptest_config(Config::with_cases(24))]

    #[test]
    fn softmax_rows_sum_to_one(raw in prop::collection::vec(-3.0f64..3.0, 6)) {
        let clf = classifier();
        let theta = perturbed(&clf, &raw);
        let p = probabilities(clf.logits_model().unwrap(), &theta, &clf.full_batch()).unwrap();
        for row in p.data().chunks(clf.classes()) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn softmax_covariance_is_psd_with_zero_row_sums(raw in prop::collection::vec(-3.0f64..3.0, 6)) {
        let clf = classifier();
        let theta = perturbed(&clf, &raw);
        let p = probabilities(clf.logits_model().unwrap(), &theta, &clf.full_batch().prefix(4)).unwrap();
        for row in p.data().chunks(clf.classes()) {
            let v = row.len();
            let s = DMatrix::from_fn(v, v, |i, j| if i == j { row[i] } else { 0.0 } - row[i] * row[j]);
            prop_assert!((&s - s.transpose()).amax() == 0.0);
            for i in 0..v {
                prop_assert!(s.row(i).sum().abs() <= 1e-15);
            }
            let min = SymmetricEigen::new(s).eigenvalues.min();
            prop_assert!(min >= -1e-15, "min eigenvalue {min}");
        }
    }

    #[test]
    fn bartlett_first_identity(raw in prop::collection::vec(-2.0f64..2.0, 6), i in 0usize..32) {
        let clf = classifier();
        let theta = perturbed(&clf, &raw);
        let one = clf.full_batch().example(i);
        let p = probabilities(clf.logits_model().unwrap(), &theta, &one).unwrap();
        let mut total = Tensor::zeros_like(&theta);
        for (y, &py) in p.data().iter().enumerate() {
            total.axpy(py, &label_grad(&clf, &theta, &one, y));
        }
        prop_assert!(total.norm_inf() <= 1e-12, "residual {}", total.norm_inf());
    }

    #[test]
    fn bartlett_second_identity_in_logit_space(z in prop::collection::vec(-4.0f64..4.0, 5)) {
        let v = z.len();
        let logits = Tensor::new(vec![1, v], z).unwrap();
        let mut p = vec![0.0; v];
        let mut outer = DMatrix::<f64>::zeros(v, v);
        let mut grads = Vec::new();
        for y in 0..v {
            let (_, g) = value_and_grad(
                |t: &mut Tape, x: Var| t.softmax_cross_entropy(x, vec![y]),
                &logits,
            )
            .unwrap();
            grads.push(g.into_data());
        }
        // ∂ℓ/∂t_y = p_y − 1, so the label's own entry recovers p
        for y in 0..v {
            p[y] = grads[y][y] + 1.0;
        }
        for (y, g) in grads.iter().enumerate() {
            outer += DMatrix::from_fn(v, v, |a, b| p[y] * g[a] * g[b]);
        }
        let s = DMatrix::from_fn(v, v, |a, b| if a == b { p[a] } else { 0.0 } - p[a] * p[b]);
        prop_assert!((outer - s).amax() <= 1e-10);
    }

    #[test]
    fn gnb_is_non_negative(raw in prop::collection::vec(-2.0f64..2.0, 6), seed in any::<u64>(), b in 1usize..16) {
        let clf = classifier();
        let theta = perturbed(&clf, &raw);
        let est = gnb_estimate(
            clf.logits_model().unwrap(),
            &theta,
            &clf.full_batch().prefix(b),
            &mut stream(seed, 1, Purpose::Estimator),
        )
        .unwrap();
        prop_assert_eq!(est.kind, EstimatorKind::Gnb);
        prop_assert_eq!(est.samples, b);
        prop_assert!(est.values.data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn estimates_are_deterministic_per_seed_and_step(seed in any::<u64>(), step in 1u64..1000) {
        let clf = classifier();
        let theta = clf.initial_params();
        let batch = clf.full_batch().prefix(8);
        for kind in [EstimatorKind::Hutchinson, EstimatorKind::Gnb, EstimatorKind::EmpiricalFisher] {
            let est = Estimator::new(kind);
            let a = est.estimate(&clf, &theta, &batch, seed, step).unwrap();
            let b = est.estimate(&clf, &theta, &batch, seed, step).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn quadratic_diagonal_is_diag_a_everywhere(
        theta in prop::collection::vec(-10.0f64..10.0, 5),
        seed in 0u64..50,
    ) {
        let q = make_quadratic(5, 100.0, true, seed).unwrap();
        let diag = exact_hessian_diag(|t: &mut Tape, p: Var| q.loss(t, p, &Batch::Full), &Tensor::from_vec(theta)).unwrap();
        for (i, h) in diag.data().iter().enumerate() {
            prop_assert!((h - q.matrix()[(i, i)]).abs() <= 1e-12 * q.matrix()[(i, i)].abs().max(1.0));
        }
    }

    #[test]
    fn hutchinson_on_pure_cross_term(seed in any::<u64>()) {
        // f = x·y has zero diagonal; one probe gives u_x·u_y in both coordinates
        let f = |t: &mut Tape, p: Var| {
            let x = t.slice(p, 0, &[1]);
            let y = t.slice(p, 1, &[1]);
            let xy = t.mul(x, y);
            t.sum(xy)
        };
        let est = hutchinson_estimate(f, &Tensor::from_vec(vec![0.3, -0.2]), &mut stream(seed, 0, Purpose::Test), 1).unwrap();
        let [a, b] = [est.values.data()[0], est.values.data()[1]];
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn hutchinson_sign_varies_across_seeds() {
    let f = |t: &mut Tape, p: Var| {
        let x = t.slice(p, 0, &[1]);
        let y = t.slice(p, 1, &[1]);
        let xy = t.mul(x, y);
        t.sum(xy)
    };
    let theta = Tensor::from_vec(vec![0.3, -0.2]);
    let signs: Vec<bool> = (0..20)
        .map(|s| hutchinson_estimate(f, &theta, &mut stream(s, 0, Purpose::Test), 1).unwrap().values.data()[0] < 0.0)
        .collect();
    assert!(signs.iter().any(|&s| s) && signs.iter().any(|&s| !s));
}

#[test]
fn sample_moments_match_hand_values() {
    let draws = vec![
        Tensor::from_vec(vec![1.0, 0.0]),
        Tensor::from_vec(vec![3.0, 0.0]),
        Tensor::from_vec(vec![5.0, 0.0]),
    ];
    let (mean, var) = sample_moments(&draws).unwrap();
    assert_eq!(mean.data(), &[3.0, 0.0]);
    assert_eq!(var.data(), &[4.0, 0.0]);
    assert!(sample_moments(&[]).is_err());
}
