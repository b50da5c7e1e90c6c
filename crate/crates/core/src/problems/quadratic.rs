use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};
use crate::tensor::Tensor;

use super::{Batch, Problem};

/// `L(θ) = ½ θᵀAθ` with symmetric positive-definite `A`; minimum 0 at the origin.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    rotated: bool,
    seed: u64,
}

/// Builds a `d`-dimensional quadratic whose eigenvalues are log-spaced over
/// `[1, kappa]`, both ends included. Unrotated problems are diagonal;
/// rotated ones conjugate the spectrum by a seeded random orthogonal matrix.
pub fn make_quadratic(d: usize, kappa: f64, rotated: bool, seed: u64) -> Result<QuadraticProblem> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::Parameter(format!("condition number {kappa} must be ≥ 1")));
    }
    if d == 1 && kappa != 1.0 {
        return Err(Error::Parameter(
            "a one-dimensional quadratic has condition number 1".into(),
        ));
    }
    let eigenvalues: Vec<f64> = (0..d)
        .map(|i| {
            if i == 0 {
                1.0
            } else if i == d - 1 {
                kappa
            } else {
                kappa.powf(i as f64 / (d - 1) as f64)
            }
        })
        .collect();
    let mut q = QuadraticProblem::diagonal(&eigenvalues)?;
    q.seed = seed;
    if rotated {
        let mut rng = rng::stream(seed, 0, Purpose::Init);
        let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let basis = g.qr().q();
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
        let a = &basis * lambda * basis.transpose();
        q.matrix = (&a + a.transpose()) * 0.5;
        q.rotated = true;
    }
    Ok(q)
}

impl QuadraticProblem {
    /// `A = diag(eigenvalues)`; every entry must be positive.
    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Parameter(
                "diagonal quadratic needs positive finite eigenvalues".into(),
            ));
        }
        Ok(Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)),
            eigenvalues: eigenvalues.to_vec(),
            rotated: false,
            seed: 0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Spectrum in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_rotated(&self) -> bool {
        self.rotated
    }

    pub fn mu(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1] / self.eigenvalues[0]
    }

    pub fn value_at(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        0.5 * t.dot(&(&self.matrix * &t))
    }

    pub fn gradient_at(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (&self.matrix * t).data.into()
    }

    fn matrix_tensor(&self) -> Tensor {
        let d = self.matrix.nrows();
        // nalgebra is column-major; A is symmetric so the layouts agree.
        Tensor::new(vec![d, d], self.matrix.as_slice().to_vec()).expect("square matrix")
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Unit-loss starting point along a seeded random direction.
    fn initial_params(&self) -> Tensor {
        let mut rng = rng::stream(self.seed, 1, Purpose::Init);
        let dir: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let scale = (1.0 / self.value_at(&dir)).sqrt();
        Tensor::from_vec(dir.into_iter().map(|x| x * scale).collect())
    }

    fn loss(&self, tape: &mut Tape, theta: Var, _batch: &Batch) -> Var {
        let d = self.dim();
        let a = tape.constant(self.matrix_tensor());
        let col = tape.reshape(theta, &[d, 1]);
        let a_theta = tape.matmul(a, col);
        let inner = tape.dot(col, a_theta);
        tape.scale(inner, 0.5)
    }

    fn sample_batch(&self, _rng: &mut Rng, _size: usize) -> Batch {
        Batch::Full
    }

    fn eval_batch(&self) -> Batch {
        Batch::Full
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unrotated_endpoints() {
        let q = make_quadratic(2, 100.0, false, 1).unwrap();
        assert_eq!(q.matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 100.0])));
    }

    #[test]
    fn kappa_one_is_identity() {
        let q = make_quadratic(4, 1.0, true, 9).unwrap();
        let err = (q.matrix() - DMatrix::identity(4, 4)).abs().max();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn rejects_bad_kappa() {
        assert!(make_quadratic(3, 0.5, false, 0).is_err());
        assert!(make_quadratic(3, f64::NAN, false, 0).is_err());
        assert!(make_quadratic(1, 4.0, false, 0).is_err());
    }

    #[test]
    fn initial_point_has_unit_loss() {
        let q = make_quadratic(6, 1e3, true, 5).unwrap();
        let th = q.initial_params();
        assert!((q.value_at(th.data()) - 1.0).abs() < 1e-12);
    }
}
