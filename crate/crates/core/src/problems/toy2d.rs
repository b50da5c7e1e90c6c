use crate::autodiff::{Tape, Var};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{Batch, Problem};

/// `L(θ) = L1(θ₁) + L2(θ₂)` with a sharp non-convex `L1` and a flat quadratic `L2`:
///
/// ```text
/// L1(x) = 8 (x − 1)² (1.3x² + 2x + 1)
/// L2(y) = ½ (y − 4)²
/// ```
///
/// Global minimum 0 at (1, 4). `L1` also has a local maximum at 0 and a
/// local minimum at −17/26.
#[derive(Clone, Copy, Debug, Default)]
pub struct Toy2D;

pub const TOY2D_MINIMIZER: [f64; 2] = [1.0, 4.0];

pub fn toy2d_loss(tape: &mut Tape, theta: Var) -> Var {
    let x = tape.slice(theta, 0, &[]);
    let y = tape.slice(theta, 1, &[]);

    let xm1 = tape.add_scalar(x, -1.0);
    let xm1_sq = tape.mul(xm1, xm1);
    let x_sq = tape.mul(x, x);
    let a = tape.scale(x_sq, 1.3);
    let b = tape.scale(x, 2.0);
    let ab = tape.add(a, b);
    let q = tape.add_scalar(ab, 1.0);
    let prod = tape.mul(xm1_sq, q);
    let l1 = tape.scale(prod, 8.0);

    let ym4 = tape.add_scalar(y, -4.0);
    let ym4_sq = tape.mul(ym4, ym4);
    let l2 = tape.scale(ym4_sq, 0.5);
    tape.add(l1, l2)
}

impl Problem for Toy2D {
    fn name(&self) -> &str {
        "toy2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_params(&self) -> Tensor {
        Tensor::from_vec(vec![crate::harness::toy::TOY2D_INIT[0], crate::harness::toy::TOY2D_INIT[1]])
    }

    fn loss(&self, tape: &mut Tape, theta: Var, _batch: &Batch) -> Var {
        toy2d_loss(tape, theta)
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
    use crate::autodiff::value_and_grad;

    #[test]
    fn minimum_and_origin() {
        let (v, g) = value_and_grad(toy2d_loss, &Tensor::from_vec(TOY2D_MINIMIZER.to_vec())).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.data(), &[0.0, 0.0]);
        let (v, g) = value_and_grad(toy2d_loss, &Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert_eq!(v, 16.0);
        assert_eq!(g.data(), &[0.0, -4.0]);
    }
}
