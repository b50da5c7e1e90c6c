//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Functions are written against a [`Tape`]: they receive the parameter node
//! and return a scalar loss node. Gradients are exact for the primitive set,
//! and Hessian-vector products come from differentiating the recorded
//! gradient a second time.

mod backward;
mod tape;

pub use tape::{softmax_rows, Tape, Var};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loss evaluation against the tape-recorded parameter vector.
pub trait Objective: Fn(&mut Tape, Var) -> Var {}
impl<F: Fn(&mut Tape, Var) -> Var> Objective for F {}

fn check_scalar(tape: &Tape, loss: Var) -> Result<()> {
    let v = tape.value(loss);
    if v.len() != 1 {
        return Err(Error::Shape(format!(
            "objective must return a scalar, got shape {:?}",
            v.shape()
        )));
    }
    Ok(())
}

fn check_theta(theta: &Tensor) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::Precondition("parameters contain non-finite values".into()));
    }
    Ok(())
}

pub fn value(f: impl Objective, theta: &Tensor) -> Result<f64> {
    check_theta(theta)?;
    let mut tape = Tape::new();
    let p = tape.param(theta.clone());
    let loss = f(&mut tape, p);
    check_scalar(&tape, loss)?;
    tape.check_finite(0)?;
    Ok(tape.value(loss).item())
}

/// Loss and exact gradient at `theta`.
pub fn value_and_grad(f: impl Objective, theta: &Tensor) -> Result<(f64, Tensor)> {
    check_theta(theta)?;
    let mut tape = Tape::new();
    let p = tape.param(theta.clone());
    let loss = f(&mut tape, p);
    check_scalar(&tape, loss)?;
    let g = tape.grad(loss, &[p])[0];
    tape.check_finite(0)?;
    Ok((tape.value(loss).item(), tape.value(g).clone()))
}

/// Exact Hessian-vector product `∇²L(θ)·u`.
pub fn hvp(f: impl Objective, theta: &Tensor, u: &Tensor) -> Result<Tensor> {
    HvpSession::new(f, theta)?.apply(u)
}

/// Forward pass and recorded gradient kept around so that many
/// Hessian-vector products at the same point share them.
#[derive(Clone, Debug)]
pub struct HvpSession {
    tape: Tape,
    param: Var,
    grad: Var,
    loss: Var,
    base_len: usize,
}

impl HvpSession {
    pub fn new(f: impl Objective, theta: &Tensor) -> Result<Self> {
        check_theta(theta)?;
        let mut tape = Tape::new();
        let param = tape.param(theta.clone());
        let loss = f(&mut tape, param);
        check_scalar(&tape, loss)?;
        let grad = tape.grad(loss, &[param])[0];
        tape.check_finite(0)?;
        let base_len = tape.len();
        Ok(Self {
            tape,
            param,
            grad,
            loss,
            base_len,
        })
    }

    pub fn loss(&self) -> f64 {
        self.tape.value(self.loss).item()
    }

    pub fn gradient(&self) -> &Tensor {
        self.tape.value(self.grad)
    }

    pub fn dim(&self) -> usize {
        self.tape.value(self.param).len()
    }

    pub fn apply(&mut self, u: &Tensor) -> Result<Tensor> {
        if u.len() != self.dim() {
            return Err(Error::Shape(format!(
                "probe has {} entries, parameters have {}",
                u.len(),
                self.dim()
            )));
        }
        let shape = self.tape.shape(self.grad).to_vec();
        let probe = self.tape.constant(u.clone().reshape(&shape)?);
        let inner = self.tape.dot(self.grad, probe);
        let hv = self.tape.grad(inner, &[self.param])[0];
        let result = self
            .tape
            .check_finite(self.base_len)
            .map(|_| self.tape.value(hv).clone());
        self.tape.truncate(self.base_len);
        result
    }
}
