use std::sync::Arc;

use rand::Rng as _;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{Batch, Problem, ScalarOutputModel};

/// Least squares `L(θ) = (1/2B) Σ_b (x_bᵀθ − y_b)²` on a fixed dataset.
#[derive(Clone, Debug)]
pub struct LinearRegression {
    inputs: Tensor,
    targets: Arc<[f64]>,
}

impl LinearRegression {
    pub fn new(inputs: Tensor, targets: Vec<f64>) -> Result<Self> {
        let (n, _) = inputs.dims2()?;
        if n != targets.len() {
            return Err(Error::Shape(format!(
                "{n} input rows but {} targets",
                targets.len()
            )));
        }
        Ok(Self {
            inputs,
            targets: targets.into(),
        })
    }

    pub fn full_batch(&self) -> Batch {
        Batch::Regression {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    fn features(&self) -> usize {
        self.inputs.shape()[1]
    }
}

impl ScalarOutputModel for LinearRegression {
    fn outputs(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        let x = match batch {
            Batch::Regression { inputs, .. } => inputs.clone(),
            other => panic!("regression expects dense inputs, got {other:?}"),
        };
        let b = x.shape()[0];
        let x = tape.constant(x);
        let col = tape.reshape(theta, &[self.features(), 1]);
        let out = tape.matmul(x, col);
        tape.reshape(out, &[b])
    }
}

impl Problem for LinearRegression {
    fn name(&self) -> &str {
        "regression"
    }

    fn dim(&self) -> usize {
        self.features()
    }

    fn initial_params(&self) -> Tensor {
        Tensor::zeros(&[self.features()])
    }

    fn loss(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        let targets = match batch {
            Batch::Regression { targets, .. } => targets.to_vec(),
            other => panic!("regression expects targets, got {other:?}"),
        };
        let out = self.outputs(tape, theta, batch);
        let y = tape.constant(Tensor::from_vec(targets));
        let r = tape.sub(out, y);
        let sq = tape.mul(r, r);
        let m = tape.mean(sq);
        tape.scale(m, 0.5)
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> Batch {
        let n = self.targets.len();
        let f = self.features();
        let mut x = Vec::with_capacity(size * f);
        let mut y = Vec::with_capacity(size);
        for _ in 0..size {
            let i = rng.random_range(0..n);
            x.extend_from_slice(&self.inputs.data()[i * f..(i + 1) * f]);
            y.push(self.targets[i]);
        }
        Batch::Regression {
            inputs: Tensor::new(vec![size, f], x).expect("batch shape"),
            targets: y.into(),
        }
    }

    fn eval_batch(&self) -> Batch {
        self.full_batch()
    }

    fn scalar_output_model(&self) -> Option<&dyn ScalarOutputModel> {
        Some(self)
    }
}
