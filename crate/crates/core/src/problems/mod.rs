//! Loss landscapes the optimizers are exercised on.

mod classifier;
mod markov;
mod quadratic;
mod regression;
mod tiny_lm;
mod toy2d;

use std::sync::Arc;

pub use classifier::{make_classifier, SoftmaxClassifier};
pub use markov::MarkovChain;
pub use quadratic::{make_quadratic, QuadraticProblem};
pub use regression::LinearRegression;
pub use tiny_lm::{make_tiny_lm, TinyLm, TinyLmConfig};
pub use toy2d::{toy2d_loss, Toy2D, TOY2D_MINIMIZER};

use crate::autodiff::{value, Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Inputs {
    /// `[B, features]` real-valued rows.
    Dense(Tensor),
    /// `B` windows of `context` token ids, flattened row-major.
    Tokens { ids: Arc<[usize]>, context: usize },
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.shape()[0],
            Inputs::Tokens { ids, context } => ids.len() / context,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self, r: std::ops::Range<usize>) -> Inputs {
        match self {
            Inputs::Dense(x) => Inputs::Dense(dense_rows(x, r)),
            Inputs::Tokens { ids, context } => Inputs::Tokens {
                ids: ids[r.start * context..r.end * context].into(),
                context: *context,
            },
        }
    }
}

fn dense_rows(x: &Tensor, r: std::ops::Range<usize>) -> Tensor {
    let cols = x.shape()[1];
    Tensor::new(
        vec![r.len(), cols],
        x.data()[r.start * cols..r.end * cols].to_vec(),
    )
    .expect("rows of a dense batch")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    /// Deterministic problems evaluate the full objective.
    Full,
    Classification {
        inputs: Inputs,
        labels: Arc<[usize]>,
    },
    Regression {
        inputs: Tensor,
        targets: Arc<[f64]>,
    },
}

impl Batch {
    /// Number of examples; `Full` counts as one.
    pub fn len(&self) -> usize {
        match self {
            Batch::Full => 1,
            Batch::Classification { labels, .. } => labels.len(),
            Batch::Regression { targets, .. } => targets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` examples (all of them if `n` is larger).
    pub fn prefix(&self, n: usize) -> Batch {
        let n = n.min(self.len()).max(1);
        self.rows(0..n)
    }

    /// Example `i` as a batch of one.
    pub fn example(&self, i: usize) -> Batch {
        assert!(i < self.len(), "example {i} out of {}", self.len());
        self.rows(i..i + 1)
    }

    fn rows(&self, r: std::ops::Range<usize>) -> Batch {
        match self {
            Batch::Full => Batch::Full,
            Batch::Classification { inputs, labels } => Batch::Classification {
                inputs: inputs.rows(r.clone()),
                labels: labels[r].into(),
            },
            Batch::Regression { inputs, targets } => Batch::Regression {
                inputs: dense_rows(inputs, r.clone()),
                targets: targets[r].into(),
            },
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Batch::Classification { labels, .. } => Some(labels),
            _ => None,
        }
    }

    /// Same inputs, different class labels.
    pub fn relabel(&self, labels: Arc<[usize]>) -> Batch {
        match self {
            Batch::Classification { inputs, .. } => {
                assert_eq!(inputs.len(), labels.len(), "one label per example");
                Batch::Classification {
                    inputs: inputs.clone(),
                    labels,
                }
            }
            _ => panic!("relabel on a batch without class labels"),
        }
    }
}

/// A loss landscape: dimension, batched loss on the tape, and data.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Seeded starting point.
    fn initial_params(&self) -> Tensor;

    /// Scalar loss node; deterministic in `(theta, batch)`.
    fn loss(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var;

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> Batch;

    /// Fixed held-out batch used for evaluation.
    fn eval_batch(&self) -> Batch;

    /// Held-out loss at `theta`; by default the loss on [`Problem::eval_batch`].
    fn eval_loss(&self, theta: &Tensor) -> Result<f64> {
        let batch = self.eval_batch();
        value(|t: &mut Tape, p: Var| self.loss(t, p, &batch), theta)
    }

    fn logits_model(&self) -> Option<&dyn LogitsModel> {
        None
    }

    fn scalar_output_model(&self) -> Option<&dyn ScalarOutputModel> {
        None
    }
}

/// Models whose loss is softmax cross-entropy over `V` logits per example.
pub trait LogitsModel: Send + Sync {
    fn num_classes(&self) -> usize;

    /// `[B, V]` logits for the batch's inputs; labels are ignored.
    fn logits(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var;
}

/// Models with one real output per example (squared-loss regression).
pub trait ScalarOutputModel: Send + Sync {
    /// `[B]` outputs for the batch's inputs.
    fn outputs(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var;
}

/// Cross-entropy loss of a logits model on the batch's own labels.
pub fn cross_entropy_loss(
    model: &dyn LogitsModel,
    tape: &mut Tape,
    theta: Var,
    batch: &Batch,
) -> Var {
    let labels = match batch {
        Batch::Classification { labels, .. } => labels.clone(),
        _ => panic!("cross-entropy needs a labelled batch"),
    };
    let logits = model.logits(tape, theta, batch);
    tape.softmax_cross_entropy(logits, labels)
}

/// Offsets of consecutive parameter blocks packed into one flat vector.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    blocks: Vec<(usize, Vec<usize>)>,
    total: usize,
}

impl Layout {
    pub(crate) fn new(shapes: &[&[usize]]) -> Self {
        let mut blocks = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for s in shapes {
            blocks.push((offset, s.to_vec()));
            offset += s.iter().product::<usize>();
        }
        Self {
            blocks,
            total: offset,
        }
    }

    pub(crate) fn total(&self) -> usize {
        self.total
    }

    pub(crate) fn view(&self, tape: &mut Tape, theta: Var, block: usize) -> Var {
        let (offset, ref shape) = self.blocks[block];
        tape.slice(theta, offset, shape)
    }

    pub(crate) fn range(&self, block: usize) -> std::ops::Range<usize> {
        let (offset, ref shape) = self.blocks[block];
        offset..offset + shape.iter().product::<usize>()
    }
}
