//! Diagonal curvature estimators and the brute-force oracles that check them.
//!
//! * Hutchinson: `u ⊙ (∇²L·u)` with Gaussian probes, unbiased for the
//!   Hessian diagonal and of either sign.
//! * Gauss-Newton-Bartlett (GNB): resample labels from the model's own
//!   softmax, take one mini-batch gradient `ĝ` on them and return `B·ĝ⊙ĝ`.
//!   Its expectation is the Gauss-Newton diagonal; it is never negative.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, HvpSession, Objective, Tape, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problems::{Batch, LogitsModel, Problem, ScalarOutputModel};
use crate::rng::{self, categorical, Purpose, Rng};
use crate::tensor::Tensor;

pub const EXACT_HESSIAN_LIMIT: usize = 5000;
pub const LABEL_ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Hutchinson,
    Gnb,
    /// Squared gradient on the true labels.
    EmpiricalFisher,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HessianEstimate {
    pub values: Tensor,
    pub kind: EstimatorKind,
    /// Probe count for Hutchinson, batch size for the label-based kinds.
    pub samples: usize,
}

fn gaussian_probe(d: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_vec((0..d).map(|_| StandardNormal.sample(rng)).collect())
}

/// `u ⊙ (∇²L(θ)·u)` for a caller-chosen probe.
pub fn hutchinson_with_probe(f: impl Objective, theta: &Tensor, u: &Tensor) -> Result<Tensor> {
    let hu = HvpSession::new(f, theta)?.apply(u)?;
    hu.zip_map(u, |h, u| h * u)
}

pub fn hutchinson_estimate(
    f: impl Objective + Sync,
    theta: &Tensor,
    rng: &mut Rng,
    probes: usize,
) -> Result<HessianEstimate> {
    hutchinson_estimate_with(f, theta, rng, probes, Exec::default())
}

/// Mean of `probes` single-probe estimates. Probe `i` is drawn from its own
/// stream keyed off one draw from `rng`, so the result does not depend on
/// how the probes are scheduled across threads.
pub fn hutchinson_estimate_with(
    f: impl Objective + Sync,
    theta: &Tensor,
    rng: &mut Rng,
    probes: usize,
    exec: Exec,
) -> Result<HessianEstimate> {
    if probes == 0 {
        return Err(Error::Parameter("hutchinson needs at least one probe".into()));
    }
    let session = HvpSession::new(f, theta)?;
    let d = theta.len();
    let key: u64 = rng.random();
    let chunks = exec.map_chunks(probes, |range| -> Result<Vec<Vec<f64>>> {
        let mut s = session.clone();
        range
            .map(|i| {
                let u = gaussian_probe(d, &mut rng::stream(key, i as u64, Purpose::Probe));
                let hu = s.apply(&u)?;
                Ok(hu.data().iter().zip(u.data()).map(|(h, u)| h * u).collect())
            })
            .collect()
    });
    let mut total = vec![0.0; d];
    for chunk in chunks {
        for est in chunk? {
            total.iter_mut().zip(&est).for_each(|(t, e)| *t += e);
        }
    }
    let n = probes as f64;
    Ok(HessianEstimate {
        values: Tensor::new(theta.shape().to_vec(), total.into_iter().map(|t| t / n).collect())?,
        kind: EstimatorKind::Hutchinson,
        samples: probes,
    })
}

/// One GNB draw: labels sampled by inverse CDF from the softmax of the
/// model's logits at `θ`.
pub fn gnb_estimate(
    model: &dyn LogitsModel,
    theta: &Tensor,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<HessianEstimate> {
    let probs = probabilities(model, theta, batch)?;
    let v = model.num_classes();
    let labels: Vec<usize> = probs.data().chunks(v).map(|p| categorical(p, rng)).collect();
    let b = labels.len();
    Ok(HessianEstimate {
        values: gnb_with_labels(model, theta, batch, &labels)?,
        kind: EstimatorKind::Gnb,
        samples: b,
    })
}

/// `B·ĝ⊙ĝ` with `ĝ` the mean cross-entropy gradient on the given labels.
pub fn gnb_with_labels(
    model: &dyn LogitsModel,
    theta: &Tensor,
    batch: &Batch,
    labels: &[usize],
) -> Result<Tensor> {
    let relabelled = batch.relabel(Arc::from(labels));
    let (_, g) = crate::autodiff::value_and_grad(
        |t: &mut Tape, p: Var| {
            let z = model.logits(t, p, &relabelled);
            t.softmax_cross_entropy(z, labels.to_vec())
        },
        theta,
    )?;
    let b = labels.len() as f64;
    Ok(g.map(|x| b * x * x))
}

/// Softmax of the logits, `[B, V]`.
pub fn probabilities(model: &dyn LogitsModel, theta: &Tensor, batch: &Batch) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = tape.param(theta.clone());
    let z = model.logits(&mut tape, p, batch);
    tape.check_finite(0)?;
    softmax_rows(tape.value(z))
}

/// Exact expectation of [`gnb_with_labels`] over the model's label
/// distribution, by enumerating all `V^B` joint labelings.
pub fn gnb_label_expectation(
    model: &dyn LogitsModel,
    theta: &Tensor,
    batch: &Batch,
    exec: Exec,
) -> Result<Tensor> {
    let probs = probabilities(model, theta, batch)?;
    let v = model.num_classes();
    let b = batch.len();
    let combos = (v as f64).powi(b as i32);
    if combos > LABEL_ENUMERATION_LIMIT as f64 {
        return Err(Error::TooLarge {
            what: "joint label enumeration",
            size: combos.min(usize::MAX as f64) as usize,
            limit: LABEL_ENUMERATION_LIMIT,
        });
    }
    let combos = combos as usize;
    let parts = exec.map_range(combos, |mut code| -> Result<Tensor> {
        let mut labels = Vec::with_capacity(b);
        let mut weight = 1.0;
        for row in probs.data().chunks(v) {
            let y = code % v;
            code /= v;
            labels.push(y);
            weight *= row[y];
        }
        Ok(gnb_with_labels(model, theta, batch, &labels)?.scale(weight))
    });
    let mut total = Tensor::zeros_like(theta);
    for part in parts {
        total.axpy(1.0, &part?);
    }
    Ok(total)
}

/// `(1/B) Σ_b Σ_y p_y(x_b) · ∇ℓ(f(θ,x_b), y)⊙∇ℓ(f(θ,x_b), y)`.
pub fn exact_gn_diag(
    model: &dyn LogitsModel,
    theta: &Tensor,
    batch: &Batch,
    exec: Exec,
) -> Result<Tensor> {
    let v = model.num_classes();
    let b = batch.len();
    if v * b > LABEL_ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            what: "label enumeration",
            size: v * b,
            limit: LABEL_ENUMERATION_LIMIT,
        });
    }
    let per_example = exec.map_range(b, |i| -> Result<Vec<f64>> {
        let one = batch.example(i);
        let mut tape = Tape::new();
        let p = tape.param(theta.clone());
        let z = model.logits(&mut tape, p, &one);
        tape.check_finite(0)?;
        let probs = softmax_rows(tape.value(z))?;
        let base = tape.len();
        let mut acc = vec![0.0; theta.len()];
        for (y, &py) in probs.data().iter().enumerate() {
            let loss = tape.softmax_cross_entropy(z, vec![y]);
            let g = tape.grad(loss, &[p])[0];
            tape.check_finite(base)?;
            for (a, gi) in acc.iter_mut().zip(tape.value(g).data()) {
                *a += py * gi * gi;
            }
            tape.truncate(base);
        }
        Ok(acc)
    });
    let mut total = vec![0.0; theta.len()];
    for part in per_example {
        total.iter_mut().zip(part?).for_each(|(t, x)| *t += x);
    }
    let n = b as f64;
    Tensor::new(theta.shape().to_vec(), total.into_iter().map(|t| t / n).collect())
}

/// Gauss-Newton diagonal for squared loss, where the output-space Hessian is
/// the identity: `(1/B) Σ_b J_b ⊙ J_b` with `J_b = ∇_θ f(θ, x_b)`.
pub fn gnb_squared_loss_estimate(
    model: &dyn ScalarOutputModel,
    theta: &Tensor,
    batch: &Batch,
) -> Result<HessianEstimate> {
    let mut tape = Tape::new();
    let p = tape.param(theta.clone());
    let out = model.outputs(&mut tape, p, batch);
    tape.check_finite(0)?;
    let b = batch.len();
    if tape.shape(out) != [b] {
        return Err(Error::Unsupported(format!(
            "squared-loss GNB needs one output per example, got shape {:?}",
            tape.shape(out)
        )));
    }
    let base = tape.len();
    let mut acc = vec![0.0; theta.len()];
    for i in 0..b {
        let mut e = vec![0.0; b];
        e[i] = 1.0;
        let e = tape.constant(Tensor::from_vec(e));
        let fi = tape.dot(out, e);
        let j = tape.grad(fi, &[p])[0];
        for (a, ji) in acc.iter_mut().zip(tape.value(j).data()) {
            *a += ji * ji;
        }
        tape.truncate(base);
    }
    let n = b as f64;
    Ok(HessianEstimate {
        values: Tensor::new(theta.shape().to_vec(), acc.into_iter().map(|a| a / n).collect())?,
        kind: EstimatorKind::Gnb,
        samples: b,
    })
}

/// Hessian diagonal from `d` basis-vector products.
pub fn exact_hessian_diag(f: impl Objective + Sync, theta: &Tensor) -> Result<Tensor> {
    exact_hessian_diag_with(f, theta, Exec::default())
}

pub fn exact_hessian_diag_with(
    f: impl Objective + Sync,
    theta: &Tensor,
    exec: Exec,
) -> Result<Tensor> {
    let d = theta.len();
    if d > EXACT_HESSIAN_LIMIT {
        return Err(Error::TooLarge {
            what: "exact hessian diagonal dimension",
            size: d,
            limit: EXACT_HESSIAN_LIMIT,
        });
    }
    let session = HvpSession::new(f, theta)?;
    let chunks = exec.map_chunks(d, |range| -> Result<Vec<f64>> {
        let mut s = session.clone();
        range
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                Ok(s.apply(&Tensor::from_vec(e))?.data()[i])
            })
            .collect()
    });
    let mut diag = Vec::with_capacity(d);
    for c in chunks {
        diag.extend(c?);
    }
    Tensor::new(theta.shape().to_vec(), diag)
}

/// Per-coordinate sample mean and unbiased sample variance of repeated draws.
pub fn sample_moments(draws: &[Tensor]) -> Result<(Tensor, Tensor)> {
    let first = draws
        .first()
        .ok_or_else(|| Error::Parameter("sample_moments needs at least one draw".into()))?;
    let n = draws.len() as f64;
    let mut mean = Tensor::zeros(first.shape());
    for d in draws {
        mean.axpy(1.0 / n, d);
    }
    let mut var = Tensor::zeros(first.shape());
    if draws.len() > 1 {
        for d in draws {
            let sq = d.zip_map(&mean, |x, m| (x - m) * (x - m))?;
            var.axpy(1.0 / (n - 1.0), &sq);
        }
    }
    Ok((mean, var))
}

pub fn empirical_fisher(g: &Tensor) -> Tensor {
    g.map(|x| x * x)
}

/// Estimator selection used by the training loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimator {
    pub kind: EstimatorKind,
    pub probes: usize,
    pub exec: Exec,
}

impl Estimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            probes: 1,
            exec: Exec::default(),
        }
    }

    /// Whether `problem` offers what this estimator needs.
    pub fn check(&self, problem: &dyn Problem) -> Result<()> {
        match self.kind {
            EstimatorKind::Gnb
                if problem.logits_model().is_none() && problem.scalar_output_model().is_none() =>
            {
                Err(Error::Unsupported(format!(
                    "the GNB estimator needs a logits or scalar-output model; `{}` has neither",
                    problem.name()
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn estimate(
        &self,
        problem: &dyn Problem,
        theta: &Tensor,
        batch: &Batch,
        seed: u64,
        step: u64,
    ) -> Result<HessianEstimate> {
        self.check(problem)?;
        let mut rng = rng::stream(seed, step, Purpose::Estimator);
        match self.kind {
            EstimatorKind::Hutchinson => hutchinson_estimate_with(
                |t: &mut Tape, p: Var| problem.loss(t, p, batch),
                theta,
                &mut rng,
                self.probes,
                self.exec,
            ),
            EstimatorKind::Gnb => match problem.logits_model() {
                Some(model) => gnb_estimate(model, theta, batch, &mut rng),
                None => gnb_squared_loss_estimate(
                    problem.scalar_output_model().expect("checked above"),
                    theta,
                    batch,
                ),
            },
            EstimatorKind::EmpiricalFisher => {
                let (_, g) = crate::autodiff::value_and_grad(
                    |t: &mut Tape, p: Var| problem.loss(t, p, batch),
                    theta,
                )?;
                Ok(HessianEstimate {
                    values: empirical_fisher(&g),
                    kind: EstimatorKind::EmpiricalFisher,
                    samples: batch.len(),
                })
            }
        }
    }
}
