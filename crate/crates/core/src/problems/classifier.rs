use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};
use crate::tensor::Tensor;

use super::{cross_entropy_loss, Batch, Inputs, Layout, LogitsModel, Problem};

const EVAL_EXAMPLES: usize = 256;

/// Two-layer tanh network on a fixed Gaussian-mixture dataset.
///
/// Parameters are packed as `W1 [d_in, hidden]`, `b1 [hidden]`,
/// `W2 [hidden, V]`, `b2 [V]`.
#[derive(Clone, Debug)]
pub struct SoftmaxClassifier {
    classes: usize,
    d_in: usize,
    hidden: usize,
    layout: Layout,
    features: Tensor,
    labels: Arc<[usize]>,
    eval: Batch,
    seed: u64,
}

pub fn make_classifier(
    classes: usize,
    d_in: usize,
    hidden: usize,
    n_examples: usize,
    seed: u64,
) -> Result<SoftmaxClassifier> {
    if classes < 2 || d_in == 0 || hidden == 0 || n_examples == 0 {
        return Err(Error::Parameter(
            "classifier needs ≥ 2 classes and positive sizes".into(),
        ));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Data);
    let means: Vec<f64> = (0..classes * d_in)
        .map(|_| 1.5 * { let z: f64 = StandardNormal.sample(&mut rng); z })
        .collect();
    let (features, labels) = mixture(&means, classes, d_in, n_examples, &mut rng);
    let mut eval_rng = rng::stream(seed, 0, Purpose::Eval);
    let (eval_x, eval_y) = mixture(&means, classes, d_in, EVAL_EXAMPLES, &mut eval_rng);
    Ok(SoftmaxClassifier {
        classes,
        d_in,
        hidden,
        layout: Layout::new(&[&[d_in, hidden], &[hidden], &[hidden, classes], &[classes]]),
        features,
        labels,
        eval: Batch::Classification {
            inputs: Inputs::Dense(eval_x),
            labels: eval_y,
        },
        seed,
    })
}

fn mixture(
    means: &[f64],
    classes: usize,
    d_in: usize,
    n: usize,
    rng: &mut Rng,
) -> (Tensor, Arc<[usize]>) {
    let mut x = Vec::with_capacity(n * d_in);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        y.push(c);
        for j in 0..d_in {
            let noise: f64 = StandardNormal.sample(rng);
            x.push(means[c * d_in + j] + noise);
        }
    }
    (
        Tensor::new(vec![n, d_in], x).expect("mixture shape"),
        y.into(),
    )
}

impl SoftmaxClassifier {
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// The whole training set as one batch.
    pub fn full_batch(&self) -> Batch {
        Batch::Classification {
            inputs: Inputs::Dense(self.features.clone()),
            labels: self.labels.clone(),
        }
    }
}

impl LogitsModel for SoftmaxClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        let x = match batch {
            Batch::Classification {
                inputs: Inputs::Dense(x),
                ..
            } => x.clone(),
            other => panic!("classifier expects dense inputs, got {other:?}"),
        };
        let x = tape.constant(x);
        let w1 = self.layout.view(tape, theta, 0);
        let b1 = self.layout.view(tape, theta, 1);
        let w2 = self.layout.view(tape, theta, 2);
        let b2 = self.layout.view(tape, theta, 3);
        let pre = tape.matmul(x, w1);
        let pre = tape.add_row_bias(pre, b1);
        let h = tape.tanh(pre);
        let out = tape.matmul(h, w2);
        tape.add_row_bias(out, b2)
    }
}

impl Problem for SoftmaxClassifier {
    fn name(&self) -> &str {
        "classifier"
    }

    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn initial_params(&self) -> Tensor {
        let mut rng = rng::stream(self.seed, 1, Purpose::Init);
        let mut theta = vec![0.0; self.dim()];
        let w1_scale = 1.0 / (self.d_in as f64).sqrt();
        let w2_scale = 0.1 / (self.hidden as f64).sqrt();
        for i in self.layout.range(0) {
            theta[i] = w1_scale * { let z: f64 = StandardNormal.sample(&mut rng); z };
        }
        for i in self.layout.range(2) {
            theta[i] = w2_scale * { let z: f64 = StandardNormal.sample(&mut rng); z };
        }
        Tensor::from_vec(theta)
    }

    fn loss(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        cross_entropy_loss(self, tape, theta, batch)
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> Batch {
        let n = self.labels.len();
        let mut x = Vec::with_capacity(size * self.d_in);
        let mut y = Vec::with_capacity(size);
        for _ in 0..size {
            let i = rng.random_range(0..n);
            x.extend_from_slice(&self.features.data()[i * self.d_in..(i + 1) * self.d_in]);
            y.push(self.labels[i]);
        }
        Batch::Classification {
            inputs: Inputs::Dense(Tensor::new(vec![size, self.d_in], x).expect("batch shape")),
            labels: y.into(),
        }
    }

    fn eval_batch(&self) -> Batch {
        self.eval.clone()
    }

    fn logits_model(&self) -> Option<&dyn LogitsModel> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::value;

    #[test]
    fn parameter_count() {
        let c = make_classifier(3, 5, 8, 60, 1).unwrap();
        assert_eq!(c.dim(), 5 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(c.dim(), 75);
    }

    #[test]
    fn initial_loss_near_uniform() {
        for v in [3usize, 5, 10] {
            let c = make_classifier(v, 5, 8, 200, 11).unwrap();
            let th = c.initial_params();
            let batch = c.full_batch();
            let l = value(|t: &mut Tape, p| c.loss(t, p, &batch), &th).unwrap();
            let ln_v = (v as f64).ln();
            assert!((l - ln_v).abs() / ln_v < 0.2, "V={v}: {l} vs {ln_v}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = make_classifier(3, 5, 8, 60, 4).unwrap();
        let b = make_classifier(3, 5, 8, 60, 4).unwrap();
        let (ba, bb) = (a.full_batch(), b.full_batch());
        let la = value(|t: &mut Tape, p| a.loss(t, p, &ba), &a.initial_params()).unwrap();
        let lb = value(|t: &mut Tape, p| b.loss(t, p, &bb), &b.initial_params()).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }
}
