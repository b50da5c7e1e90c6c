//! Self-checks behind `validate --suite`.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{hvp, value, value_and_grad, Tape, Var};
use crate::error::{Error, Result};
use crate::estimators::{
    exact_gn_diag, exact_hessian_diag, gnb_estimate, gnb_label_expectation, hutchinson_estimate,
    sample_moments,
};
use crate::exec::Exec;
use crate::problems::{make_classifier, make_quadratic, make_tiny_lm, Batch, Problem, QuadraticProblem, Toy2D};
use crate::rng::{stream, Purpose, Rng};
use crate::tensor::Tensor;
use crate::theory::{
    equal_share_start, log_grid, run_clipped_newton, signgd_best_steps, signgd_lower_bound,
    theorem1_bound, TheorySetting,
};

use super::toy::{toy_experiment, TOY2D_INIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Autodiff,
    Estimators,
    Theory,
    Toy2d,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autodiff" => Ok(Suite::Autodiff),
            "estimators" => Ok(Suite::Estimators),
            "theory" => Ok(Suite::Theory),
            "toy2d" => Ok(Suite::Toy2d),
            other => Err(Error::Config(format!(
                "unknown suite \"{other}\" (expected autodiff, estimators, theory or toy2d)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    match suite {
        Suite::Autodiff => autodiff_suite(),
        Suite::Estimators => estimators_suite(),
        Suite::Theory => theory_suite(),
        Suite::Toy2d => toy_suite(),
    }
}

fn gaussian(d: usize, scale: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_vec(
        (0..d)
            .map(|_| scale * { let z: f64 = StandardNormal.sample(rng); z })
            .collect(),
    )
}

/// Worst relative errors of gradient and HVP against central differences,
/// and the worst HVP asymmetry, over `probes` random directions.
pub fn finite_difference_errors(
    problem: &dyn Problem,
    batch: &Batch,
    theta: &Tensor,
    probes: usize,
    rng: &mut Rng,
) -> Result<(f64, f64, f64)> {
    let f = |t: &mut Tape, p: Var| problem.loss(t, p, batch);
    let eps = 1e-5;
    let (_, g) = value_and_grad(f, theta)?;
    let (mut grad_err, mut hvp_err, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..probes {
        let u = gaussian(theta.len(), 1.0, rng);
        let v = gaussian(theta.len(), 1.0, rng);
        let mut plus = theta.clone();
        plus.axpy(eps, &u);
        let mut minus = theta.clone();
        minus.axpy(-eps, &u);
        let fd = (value(f, &plus)? - value(f, &minus)?) / (2.0 * eps);
        let exact = g.dot(&u);
        grad_err = grad_err.max((fd - exact).abs() / exact.abs().max(1.0));

        let hu = hvp(f, theta, &u)?;
        let (_, gp) = value_and_grad(f, &plus)?;
        let (_, gm) = value_and_grad(f, &minus)?;
        let fd_h = gp.zip_map(&gm, |a, b| (a - b) / (2.0 * eps))?;
        let diff = hu.zip_map(&fd_h, |a, b| a - b)?.norm_l2();
        hvp_err = hvp_err.max(diff / hu.norm_l2().max(1.0));

        let hv = hvp(f, theta, &v)?;
        asym = asym.max((hu.dot(&v) - hv.dot(&u)).abs());
    }
    Ok((grad_err, hvp_err, asym))
}

fn autodiff_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let mut rng = stream(0, 0, Purpose::Test);
    let quad = make_quadratic(6, 1e3, true, 1)?;
    let clf = make_classifier(3, 5, 8, 64, 2)?;
    let lm = make_tiny_lm(16, 3, 8, 3)?;
    let cases: Vec<(&str, &dyn Problem, Batch, Tensor)> = vec![
        ("toy2d", &Toy2D, Batch::Full, Tensor::from_vec(vec![0.3, 1.2])),
        ("quadratic", &quad, Batch::Full, quad.initial_params()),
        ("classifier", &clf, clf.full_batch().prefix(16), clf.initial_params()),
        ("tiny_lm", &lm, lm.eval_batch().prefix(16), lm.initial_params()),
    ];
    for (name, problem, batch, theta) in cases {
        let (g, h, s) = finite_difference_errors(problem, &batch, &theta, 10, &mut rng)?;
        report.push(format!("{name} gradient"), g <= 1e-6, format!("max rel err {g:.2e}"));
        report.push(format!("{name} hvp"), h <= 1e-6, format!("max rel err {h:.2e}"));
        report.push(format!("{name} symmetry"), s <= 1e-10, format!("max |<Hu,v>-<Hv,u>| {s:.2e}"));
    }
    Ok(report)
}

fn estimators_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let q = make_quadratic(5, 10.0, true, 11)?;
    let f = |t: &mut Tape, p: Var| q.loss(t, p, &Batch::Full);
    let theta = q.initial_params();
    let exact = exact_hessian_diag(f, &theta)?;
    let est = hutchinson_estimate(f, &theta, &mut stream(1, 0, Purpose::Test), 50_000)?;
    let worst = est
        .values
        .data()
        .iter()
        .zip(exact.data())
        .map(|(e, x)| ((e - x) / x).abs())
        .fold(0.0, f64::max);
    report.push("hutchinson mean", worst <= 0.02, format!("50000 probes, max rel err {worst:.4}"));

    let clf = make_classifier(3, 5, 8, 64, 4)?;
    let batch = clf.full_batch().prefix(4);
    let th = clf.initial_params();
    let enumerated = gnb_label_expectation(&clf, &th, &batch, Exec::default())?;
    let gn = exact_gn_diag(&clf, &th, &batch, Exec::default())?;
    let err = enumerated.zip_map(&gn, |a, b| (a - b).abs())?.norm_inf();
    report.push("gnb expectation", err <= 1e-10, format!("max abs err {err:.2e}"));
    let nonneg = enumerated.data().iter().all(|&x| x >= 0.0);
    report.push("gnb non-negative", nonneg, "all entries ≥ 0");

    let (hv, gv) = estimator_variances(&clf, &th, &clf.full_batch().prefix(16), 400, 5)?;
    report.push(
        "estimator variance",
        hv.is_finite() && gv.is_finite(),
        format!("mean per-coordinate variance, hutchinson {hv:.3e}, gnb {gv:.3e} (reported only)"),
    );
    Ok(report)
}

/// Mean per-coordinate variance of single-draw Hutchinson and GNB estimates
/// on one mini-batch. Neither is expected to win everywhere, so nothing
/// about the ordering is checked.
pub fn estimator_variances(
    problem: &dyn Problem,
    theta: &Tensor,
    batch: &Batch,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let model = problem.logits_model().ok_or_else(|| {
        Error::Unsupported(format!("`{}` has no logits model", problem.name()))
    })?;
    let f = |t: &mut Tape, p: Var| problem.loss(t, p, batch);
    let mut rng = stream(seed, 0, Purpose::Test);
    let mut hutch = Vec::with_capacity(draws);
    let mut gnb = Vec::with_capacity(draws);
    for _ in 0..draws {
        hutch.push(hutchinson_estimate(f, theta, &mut rng, 1)?.values);
        gnb.push(gnb_estimate(model, theta, batch, &mut rng)?.values);
    }
    let (_, hv) = sample_moments(&hutch)?;
    let (_, gv) = sample_moments(&gnb)?;
    let d = theta.len() as f64;
    Ok((hv.sum() / d, gv.sum() / d))
}

/// Clipped Newton across a condition-number sweep on diagonal quadratics.
pub struct Theorem1Sweep {
    pub kappas: Vec<f64>,
    pub steps: Vec<Option<usize>>,
    pub bound: u64,
    pub max_residual: f64,
}

pub fn theorem1_sweep(d: usize, kappas: &[f64], eps: f64) -> Result<Theorem1Sweep> {
    let (mu, r, gap) = (1.0, 1.0, 1.0);
    let setting = TheorySetting::theorem1(mu, r, d);
    let bound = theorem1_bound(gap, mu, r, d, eps);
    let mut steps = Vec::new();
    let mut max_residual = f64::NEG_INFINITY;
    for &kappa in kappas {
        let q: QuadraticProblem = make_quadratic(d, kappa, false, 0)?;
        let start = equal_share_start(q.eigenvalues(), gap);
        let traj = run_clipped_newton(&q, &start, &setting, 0.0, eps, 10 * bound as usize)?;
        max_residual = max_residual.max(traj.max_residual());
        steps.push(traj.steps_to_target);
    }
    Ok(Theorem1Sweep {
        kappas: kappas.to_vec(),
        steps,
        bound,
        max_residual,
    })
}

fn theory_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let sweep = theorem1_sweep(10, &[1.0, 1e2, 1e4, 1e6], 1e-6)?;
    let within = sweep.steps.iter().all(|s| matches!(s, Some(n) if *n as u64 <= sweep.bound));
    report.push(
        "runtime bound",
        within,
        format!("steps {:?} vs bound {}", sweep.steps, sweep.bound),
    );
    let counts: Vec<f64> = sweep.steps.iter().flatten().map(|&s| s as f64).collect();
    let spread = counts.iter().cloned().fold(0.0, f64::max) / counts.iter().cloned().fold(f64::MAX, f64::min);
    report.push("condition-number independence", spread < 2.0, format!("max/min steps {spread:.3}"));
    report.push(
        "descent lemma",
        sweep.max_residual <= 1e-10,
        format!("max residual {:.2e}", sweep.max_residual),
    );
    for kappa in [1e2, 1e4] {
        let bound = signgd_lower_bound(1.0, kappa, 1.0, 0.01);
        let best = signgd_best_steps(1.0, kappa, 1.0, 0.01, &log_grid(1e-5, 1.0, 20), 2_000_000);
        let ok = matches!(best, Some((s, _)) if s as f64 >= bound);
        report.push(
            format!("signgd lower bound, kappa {kappa:e}"),
            ok,
            format!("best {best:?} vs bound {bound:.2}"),
        );
    }
    Ok(report)
}

fn toy_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let r = toy_experiment(TOY2D_INIT)?;
    report.push(
        "newton stalls",
        r.newton_stuck(),
        format!("ends at {:?} with loss {:.4}", r.newton_final.theta, r.newton_final.loss),
    );
    report.push(
        "clipped converges",
        r.clipped_converges(),
        format!("steps to 1e-6: {:?}", r.clipped_steps_to_1e6),
    );
    report.push(
        "signgd slower",
        r.signgd_slower(),
        format!(
            "to 1e-3: clipped {:?}, best signgd {:?}",
            r.clipped_steps_to_1e3, r.signgd_best
        ),
    );
    Ok(report)
}
