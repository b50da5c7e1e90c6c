use proptest::prelude::*;
use proptest::test_runner::Config;

use sophia_lab::autodiff::{hvp, value, value_and_grad, Tape, Var};
use sophia_lab::problems::{
    make_classifier, make_quadratic, make_tiny_lm, Batch, LinearRegression, Problem, Toy2D,
};
use sophia_lab::{Error, Tensor};

const EPS: f64 = 1e-5;

fn problems() -> Vec<(Box<dyn Problem>, Batch)> {
    let quad = make_quadratic(6, 1e3, true, 1).unwrap();
    let clf = make_classifier(3, 4, 5, 32, 2).unwrap();
    let clf_batch = clf.full_batch().prefix(8);
    let lm = make_tiny_lm(8, 2, 4, 3).unwrap();
    let lm_batch = lm.eval_batch().prefix(6);
    let reg = LinearRegression::new(
        Tensor::new(vec![4, 3], (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect()).unwrap(),
        vec![0.5, -1.0, 2.0, 0.0],
    )
    .unwrap();
    let reg_batch = reg.full_batch();
    vec![
        (Box::new(Toy2D), Batch::Full),
        (Box::new(quad), Batch::Full),
        (Box::new(clf), clf_batch),
        (Box::new(lm), lm_batch),
        (Box::new(reg), reg_batch),
    ]
}

fn direction(d: usize, raw: &[f64]) -> Tensor {
    Tensor::from_vec((0..d).map(|i| raw[i % raw.len()] * (1.0 + i as f64).cos()).collect())
}

fn shifted(theta: &Tensor, u: &Tensor, eps: f64) -> Tensor {
    let mut out = theta.clone();
    out.axpy(eps, u);
    out
}

proptest! {
    #![proptest_config(Config::with_cases(10))]

    #[test]
    fn gradient_and_hvp_match_central_differences(
        raw_u in prop::collection::vec(-1.0f64..1.0, 8),
        raw_shift in prop::collection::vec(-0.3f64..0.3, 8),
    ) {
        for (problem, batch) in problems() {
            let f = |t: &mut Tape, p: Var| problem.loss(t, p, &batch);
            let d = problem.dim();
            let mut theta = problem.initial_params();
            theta.axpy(1.0, &direction(d, &raw_shift));
            let u = direction(d, &raw_u);

            let (_, g) = value_and_grad(f, &theta).unwrap();
            let fd = (value(f, &shifted(&theta, &u, EPS)).unwrap()
                - value(f, &shifted(&theta, &u, -EPS)).unwrap())
                / (2.0 * EPS);
            let exact = g.dot(&u);
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{}: directional derivative {exact} vs {fd}", problem.name());

            let hu = hvp(f, &theta, &u).unwrap();
            let (_, gp) = value_and_grad(f, &shifted(&theta, &u, EPS)).unwrap();
            let (_, gm) = value_and_grad(f, &shifted(&theta, &u, -EPS)).unwrap();
            let fd_h = gp.zip_map(&gm, |a, b| (a - b) / (2.0 * EPS)).unwrap();
            let err = hu.zip_map(&fd_h, |a, b| a - b).unwrap().norm_l2();
            prop_assert!(err <= 1e-6 * hu.norm_l2().max(1.0), "{}: hvp err {err}", problem.name());
        }
    }

    #[test]
    fn hvp_is_linear_and_symmetric(
        raw_u in prop::collection::vec(-1.0f64..1.0, 8),
        raw_v in prop::collection::vec(-1.0f64..1.0, 8),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        for (problem, batch) in problems() {
            let f = |t: &mut Tape, p: Var| problem.loss(t, p, &batch);
            let d = problem.dim();
            let theta = problem.initial_params();
            let u = direction(d, &raw_u);
            let v = direction(d, &raw_v);
            let hu = hvp(f, &theta, &u).unwrap();
            let hv = hvp(f, &theta, &v).unwrap();

            let mut w = u.scale(a);
            w.axpy(b, &v);
            let hw = hvp(f, &theta, &w).unwrap();
            let mut combo = hu.scale(a);
            combo.axpy(b, &hv);
            let gap = hw.zip_map(&combo, |x, y| (x - y).abs()).unwrap().norm_inf();
            prop_assert!(gap <= 1e-12 * hw.norm_inf().max(1.0), "{}: linearity gap {gap}", problem.name());

            let asym = (hu.dot(&v) - hv.dot(&u)).abs();
            prop_assert!(asym <= 1e-10, "{}: asymmetry {asym}", problem.name());
        }
    }

    #[test]
    fn non_finite_results_are_errors(x in -10.0f64..-0.1) {
        let r = value(|t: &mut Tape, p: Var| { let l = t.log(p); t.sum(l) }, &Tensor::from_vec(vec![x]));
        prop_assert!(matches!(r, Err(Error::NonFinite { .. })), "log({x}) gave {r:?}");
    }

    #[test]
    fn repeated_evaluation_is_bitwise_stable(raw in prop::collection::vec(-0.5f64..0.5, 8)) {
        for (problem, batch) in problems() {
            let f = |t: &mut Tape, p: Var| problem.loss(t, p, &batch);
            let mut theta = problem.initial_params();
            theta.axpy(1.0, &direction(problem.dim(), &raw));
            let a = value_and_grad(f, &theta).unwrap();
            let b = value_and_grad(f, &theta).unwrap();
            prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
            prop_assert_eq!(a.1, b.1);
        }
    }
}
