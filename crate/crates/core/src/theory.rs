//! Eigenspace-clipped Newton on convex objectives, with the runtime bounds
//! it is measured against.
//!
//! The clipped step is
//!
//! ```text
//! θ⁺ = θ − η Vᵀ clip(V H⁻¹ ∇L(θ), ρ),    H = Vᵀ Σ V
//! ```
//!
//! where the rows of `V` are orthonormal eigenvectors. Since `V H⁻¹ = Σ⁻¹ V`,
//! the clipped quantity is `(v_iᵀ∇L)/σ_i` per eigen-direction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::autodiff::{value_and_grad, HvpSession, Objective};
use crate::error::{Error, Result};
use crate::problems::QuadraticProblem;
use crate::tensor::Tensor;

pub const MAX_DIM: usize = 200;

/// A convex objective with exact first and second derivatives.
pub trait ConvexObjective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>>;
}

impl ConvexObjective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.matrix().nrows()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.value_at(theta))
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.gradient_at(theta))
    }

    fn hessian(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.matrix().clone())
    }
}

/// Any tape objective, with the Hessian assembled from `d` products.
pub struct TapeObjective<F> {
    f: F,
    dim: usize,
}

impl<F: Objective> TapeObjective<F> {
    pub fn new(f: F, dim: usize) -> Self {
        Self { f, dim }
    }
}

impl<F: Objective> ConvexObjective for TapeObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        crate::autodiff::value(&self.f, &Tensor::from_vec(theta.to_vec()))
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(value_and_grad(&self.f, &Tensor::from_vec(theta.to_vec()))?
            .1
            .into_data())
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let mut session = HvpSession::new(&self.f, &Tensor::from_vec(theta.to_vec()))?;
        let mut h = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let col = session.apply(&Tensor::from_vec(e))?;
            h.set_column(j, &DVector::from_column_slice(col.data()));
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// `H = Vᵀ Σ V` with eigenvectors as the rows of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenFactors {
    pub vectors: DMatrix<f64>,
    pub values: Vec<f64>,
}

impl EigenFactors {
    pub fn new(hessian: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(hessian.clone());
        Self {
            vectors: eig.eigenvectors.transpose(),
            values: eig.eigenvalues.iter().copied().collect(),
        }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        self.vectors.transpose() * sigma * &self.vectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheorySetting {
    /// Smallest Hessian eigenvalue at the minimizer.
    pub mu: f64,
    /// Hessian-continuity radius.
    pub r: f64,
    pub rho: f64,
    pub eta: f64,
}

impl TheorySetting {
    /// The regime [`theorem1_bound`] assumes: `η = ½`, `ρ = R / (2√d)`.
    pub fn theorem1(mu: f64, r: f64, d: usize) -> Self {
        Self {
            mu,
            r,
            rho: r / (2.0 * (d as f64).sqrt()),
            eta: 0.5,
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d > MAX_DIM {
        return Err(Error::TooLarge {
            what: "theory problem dimension",
            size: d,
            limit: MAX_DIM,
        });
    }
    Ok(())
}

/// Clipped step from given factors. Returns the new point and whether any
/// eigen-coordinate was clipped.
pub fn clipped_step_from_factors(
    theta: &[f64],
    grad: &[f64],
    factors: &EigenFactors,
    setting: &TheorySetting,
) -> Result<(Vec<f64>, bool)> {
    let min = factors.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let g = DVector::from_column_slice(grad);
    let proj = &factors.vectors * g;
    let mut clipped = false;
    let z = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(&factors.values).map(|(p, s)| {
            let z = p / s;
            if z.abs() > setting.rho {
                clipped = true;
            }
            z.clamp(-setting.rho, setting.rho)
        }),
    );
    let delta = factors.vectors.transpose() * z;
    let next = theta
        .iter()
        .zip(delta.iter())
        .map(|(t, d)| t - setting.eta * d)
        .collect();
    Ok((next, clipped))
}

/// One eigenspace-clipped Newton step with a fresh eigendecomposition.
pub fn clipped_newton_step(
    obj: &dyn ConvexObjective,
    theta: &Tensor,
    setting: &TheorySetting,
) -> Result<Tensor> {
    check_dim(obj.dim())?;
    let th = theta.data();
    let factors = EigenFactors::new(&obj.hessian(th)?);
    let (next, _) = clipped_step_from_factors(th, &obj.gradient(th)?, &factors, setting)?;
    Tensor::new(theta.shape().to_vec(), next)
}

/// Explicit-constant form of the two-phase runtime bound, with `η = ½` and
/// `ρ = R/(2√d)`:
///
/// ```text
/// ⌈8·gap / (ημρ²)⌉ + max(0, ⌈ln((μρ²/8)/ε) / −ln(1 − η(1−η))⌉)
/// ```
///
/// The first phase descends at least `(η−η²)·μρ²/8`-ish per step until the
/// loss is below `μρ²/8`; after that clipping is inactive and the loss
/// contracts by `1 − η(1−η)` each step. With the stated `ρ` the log term
/// is `ln(μR²/(32dε))`.
pub fn theorem1_bound(gap: f64, mu: f64, r: f64, d: usize, eps: f64) -> u64 {
    let s = TheorySetting::theorem1(mu, r, d);
    let rho2 = s.rho * s.rho;
    // ρ² = R²/(4d) is rarely exact in binary; don't let rounding add a step
    let ceil = |x: f64| (x - 1e-9 * x.abs().max(1.0)).ceil();
    let phase1 = ceil(8.0 * gap / (s.eta * mu * rho2));
    let contraction = -(1.0 - s.eta * (1.0 - s.eta)).ln();
    let phase2 = ceil(((mu * rho2 / 8.0) / eps).ln() / contraction).max(0.0);
    (phase1 + phase2) as u64
}

/// Steps any SignGD learning rate needs on `μ/2·θ₁² + β/2·θ₂²` to hold the
/// loss below `ε` at two consecutive steps from every start with loss ≤ `Δ`.
pub fn signgd_lower_bound(mu: f64, beta: f64, delta: f64, eps: f64) -> f64 {
    (0.5 * ((delta / eps).sqrt() - 2f64.sqrt()) * (beta / mu).sqrt()).max(0.0)
}

/// `L(θ⁺) − L(θ) + (η−η²) Σ min(ρ|v_iᵀ∇L|, |v_iᵀ∇L|²/σ_i)`; the descent
/// lemma says this is ≤ 0.
pub fn verify_descent_lemma(
    obj: &dyn ConvexObjective,
    theta: &Tensor,
    setting: &TheorySetting,
) -> Result<f64> {
    let d = obj.dim();
    check_dim(d)?;
    if setting.eta * setting.rho > setting.r / (d as f64).sqrt() * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "descent lemma needs ηρ ≤ R/√d, got {} > {}",
            setting.eta * setting.rho,
            setting.r / (d as f64).sqrt()
        )));
    }
    let th = theta.data();
    let factors = EigenFactors::new(&obj.hessian(th)?);
    let grad = obj.gradient(th)?;
    descent_residual(obj, th, &grad, &factors, setting)
}

fn descent_residual(
    obj: &dyn ConvexObjective,
    th: &[f64],
    grad: &[f64],
    factors: &EigenFactors,
    setting: &TheorySetting,
) -> Result<f64> {
    let (next, _) = clipped_step_from_factors(th, grad, factors, setting)?;
    let proj = &factors.vectors * DVector::from_column_slice(grad);
    let guaranteed: f64 = proj
        .iter()
        .zip(&factors.values)
        .map(|(p, s)| (setting.rho * p.abs()).min(p * p / s))
        .sum();
    let eta = setting.eta;
    Ok(obj.value(&next)? - obj.value(th)? + (eta - eta * eta) * guaranteed)
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// `losses[t]` is the loss after `t` steps.
    pub losses: Vec<f64>,
    /// Whether step `t+1` clipped any eigen-coordinate.
    pub clipped: Vec<bool>,
    pub descent_residuals: Vec<f64>,
    pub steps_to_target: Option<usize>,
}

impl Trajectory {
    pub fn max_residual(&self) -> f64 {
        self.descent_residuals
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Iterates the clipped step until the loss is ≤ `target` or `max_steps`.
/// `min_loss` is the objective's minimum value.
pub fn run_clipped_newton(
    obj: &dyn ConvexObjective,
    theta0: &[f64],
    setting: &TheorySetting,
    min_loss: f64,
    target: f64,
    max_steps: usize,
) -> Result<Trajectory> {
    check_dim(obj.dim())?;
    let mut theta = theta0.to_vec();
    let mut traj = Trajectory::default();
    let mut loss = obj.value(&theta)? - min_loss;
    traj.losses.push(loss);
    if loss <= target {
        traj.steps_to_target = Some(0);
        return Ok(traj);
    }
    for t in 1..=max_steps {
        let factors = EigenFactors::new(&obj.hessian(&theta)?);
        let grad = obj.gradient(&theta)?;
        traj.descent_residuals
            .push(descent_residual(obj, &theta, &grad, &factors, setting)?);
        let (next, clipped) = clipped_step_from_factors(&theta, &grad, &factors, setting)?;
        theta = next;
        loss = obj.value(&theta)? - min_loss;
        traj.losses.push(loss);
        traj.clipped.push(clipped);
        if loss <= target {
            traj.steps_to_target = Some(t);
            break;
        }
    }
    Ok(traj)
}

/// Start on a diagonal quadratic where each coordinate carries an equal share
/// of the total loss `gap`.
pub fn equal_share_start(eigenvalues: &[f64], gap: f64) -> Vec<f64> {
    let d = eigenvalues.len() as f64;
    eigenvalues
        .iter()
        .map(|s| (2.0 * gap / (d * s)).sqrt())
        .collect()
}

/// SignGD on `μ/2·θ₁² + β/2·θ₂²`: the first `T` with `L(θ_{T−1}) ≤ ε` and
/// `L(θ_T) ≤ ε` from both adversarial starts `(√(2Δ/μ), 0)` and `(0, √(2Δ/β))`.
pub fn signgd_steps(mu: f64, beta: f64, delta: f64, eps: f64, eta: f64, max_steps: usize) -> Option<usize> {
    let starts = [[(2.0 * delta / mu).sqrt(), 0.0], [0.0, (2.0 * delta / beta).sqrt()]];
    let loss = |t: &[f64; 2]| 0.5 * mu * t[0] * t[0] + 0.5 * beta * t[1] * t[1];
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let mut worst = 0;
    for start in starts {
        let mut th = start;
        let mut prev_ok = loss(&th) <= eps;
        let mut reached = None;
        for t in 1..=max_steps {
            th = [th[0] - eta * sign(mu * th[0]), th[1] - eta * sign(beta * th[1])];
            let ok = loss(&th) <= eps;
            if ok && prev_ok {
                reached = Some(t);
                break;
            }
            prev_ok = ok;
        }
        worst = worst.max(reached?);
    }
    Some(worst)
}

/// `n` log-spaced values from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fewest SignGD steps over an η grid, with the η that achieved them.
pub fn signgd_best_steps(
    mu: f64,
    beta: f64,
    delta: f64,
    eps: f64,
    grid: &[f64],
    max_steps: usize,
) -> Option<(usize, f64)> {
    grid.iter()
        .filter_map(|&eta| signgd_steps(mu, beta, delta, eps, eta, max_steps).map(|s| (s, eta)))
        .min_by_key(|&(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_quadratic;

    #[test]
    fn hand_evaluated_clipped_step() {
        let q = QuadraticProblem::diagonal(&[1.0, 100.0]).unwrap();
        let s = TheorySetting {
            mu: 1.0,
            r: 10.0,
            rho: 1.0,
            eta: 0.5,
        };
        let next = clipped_newton_step(&q, &Tensor::from_vec(vec![10.0, 10.0]), &s).unwrap();
        assert!((next.data()[0] - 9.5).abs() < 1e-12);
        assert!((next.data()[1] - 9.5).abs() < 1e-12);
        let zero = clipped_newton_step(&q, &Tensor::from_vec(vec![0.0, 0.0]), &s).unwrap();
        assert_eq!(zero.data(), &[0.0, 0.0]);
    }

    #[test]
    fn unclipped_newton_halves_distance() {
        let q = make_quadratic(5, 1e3, true, 3).unwrap();
        let s = TheorySetting {
            mu: 1.0,
            r: 1.0,
            rho: f64::INFINITY,
            eta: 0.5,
        };
        let th = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0]);
        let next = clipped_newton_step(&q, &th, &s).unwrap();
        assert!((next.norm_l2() - 0.5 * th.norm_l2()).abs() < 1e-10);
    }

    #[test]
    fn non_pd_rejected() {
        let neg = TapeObjective::new(
            |t: &mut crate::autodiff::Tape, p| {
                let sq = t.mul(p, p);
                let s = t.sum(sq);
                t.scale(s, -1.0)
            },
            2,
        );
        let err = clipped_newton_step(&neg, &Tensor::from_vec(vec![1.0, 1.0]), &TheorySetting::theorem1(1.0, 1.0, 2))
            .unwrap_err();
        assert_eq!(err.kind(), "not_positive_definite");
    }

    #[test]
    fn bound_examples() {
        assert_eq!(theorem1_bound(1.0, 1.0, 1.0, 2, 1e-3), 138);
        assert_eq!(theorem1_bound(1.0, 1.0, 1.0, 2, 0.5), 128);
        assert!((signgd_lower_bound(1.0, 100.0, 1.0, 0.01) - 0.5 * (10.0 - 2f64.sqrt()) * 10.0).abs() < 1e-12);
        assert_eq!(signgd_lower_bound(1.0, 100.0, 1.0, 0.5), 0.0);
        let a = signgd_lower_bound(1.0, 100.0, 1.0, 0.01);
        let b = signgd_lower_bound(1.0, 400.0, 1.0, 0.01);
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn descent_lemma_at_minimizer_is_zero() {
        let q = make_quadratic(4, 50.0, true, 1).unwrap();
        let s = TheorySetting::theorem1(1.0, 1.0, 4);
        assert_eq!(verify_descent_lemma(&q, &Tensor::zeros(&[4]), &s).unwrap(), 0.0);
    }

    #[test]
    fn descent_lemma_hypothesis_checked() {
        let q = make_quadratic(4, 50.0, false, 1).unwrap();
        let s = TheorySetting {
            mu: 1.0,
            r: 1.0,
            rho: 5.0,
            eta: 0.5,
        };
        let err = verify_descent_lemma(&q, &Tensor::ones(&[4]), &s).unwrap_err();
        assert_eq!(err.kind(), "precondition");
    }

    #[test]
    fn eigen_factors_reconstruct() {
        let q = make_quadratic(6, 1e4, true, 8).unwrap();
        let f = EigenFactors::new(q.matrix());
        assert!((f.reconstruct() - q.matrix()).abs().max() < 1e-9);
        let vvt = &f.vectors * f.vectors.transpose();
        assert!((vvt - DMatrix::identity(6, 6)).abs().max() < 1e-10);
    }
}
