use crate::autodiff::{value_and_grad, Tape, Var};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::exec::Exec;
use crate::optim;
use crate::problems::Problem;
use crate::rng::{self, Purpose};
use crate::tensor::Tensor;

use super::config::ExperimentConfig;
use super::schedule::{cosine_lr, grad_clip_global_norm};

/// Losses above this count as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub step: u64,
    pub loss: f64,
    pub eval_loss: f64,
    pub lr: f64,
    pub unclipped_frac: f64,
    pub h_norm: f64,
    pub grad_norm: f64,
    pub grad_clip_triggered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn final_eval_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.eval_loss)
    }

    pub fn diverged(&self) -> bool {
        self.status == RunStatus::Diverged
    }
}

/// A finished or stopped run with the last finite parameters.
#[derive(Clone, Debug)]
pub struct Trained {
    pub record: RunRecord,
    pub theta: Tensor,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let problem = cfg.problem.build()?;
    Ok(train(cfg, problem.as_ref(), None)?.record)
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

/// Runs the training loop on `problem`, stopping after `limit` steps when
/// given. The schedule always spans the configured total.
pub fn train(cfg: &ExperimentConfig, problem: &dyn Problem, limit: Option<u64>) -> Result<Trained> {
    cfg.validate()?;
    let estimator = match &cfg.optimizer {
        optim::OptimizerConfig::Sophia(s) => {
            let est = Estimator {
                kind: s.estimator,
                probes: cfg.probes,
                exec: Exec::default(),
            };
            est.check(problem).map_err(|e| Error::Config(e.to_string()))?;
            Some(est)
        }
        _ => None,
    };

    let total = cfg.schedule.total;
    let last = limit.map_or(total, |l| l.min(total));
    let mut theta = problem.initial_params();
    let mut state = cfg.optimizer.init_state(theta.shape());
    let mut eval_loss = f64::NAN;
    let mut rows = Vec::with_capacity(last as usize);
    let diverged = |rows, theta| {
        Ok(Trained {
            record: RunRecord {
                rows,
                status: RunStatus::Diverged,
            },
            theta,
        })
    };

    for t in 1..=last {
        let batch = problem.sample_batch(
            &mut rng::stream(cfg.seed, t, Purpose::Batch),
            cfg.batch_size,
        );
        let (loss, g) = match value_and_grad(|tp: &mut Tape, p: Var| problem.loss(tp, p, &batch), &theta) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => return diverged(rows, theta),
            Err(e) => return Err(e),
        };
        if !(loss <= DIVERGENCE_LOSS) {
            return diverged(rows, theta);
        }
        let (g, clipped) = match cfg.optimizer.grad_clip_norm() {
            Some(c) => grad_clip_global_norm(&g, c),
            None => (g, false),
        };
        let h_hat = match (cfg.optimizer.estimator_due(t), &estimator) {
            (Some(_), Some(est)) => {
                let sub = batch.prefix(cfg.estimator_batch_size);
                match est.estimate(problem, &theta, &sub, cfg.seed, t) {
                    Ok(h) => Some(h),
                    Err(e) if is_divergence(&e) => return diverged(rows, theta),
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        let lr = cosine_lr(t, &cfg.schedule)?;
        let update = optim::step(&cfg.optimizer, &mut state, &theta, &g, h_hat.as_ref(), lr)?;
        if !update.theta.is_finite() {
            return diverged(rows, theta);
        }
        theta = update.theta;
        if t == 1 || t % cfg.eval_interval == 0 || t == total {
            eval_loss = match problem.eval_loss(&theta) {
                Ok(v) if v <= DIVERGENCE_LOSS => v,
                Ok(_) => return diverged(rows, theta),
                Err(e) if is_divergence(&e) => return diverged(rows, theta),
                Err(e) => return Err(e),
            };
        }
        rows.push(Row {
            step: t,
            loss,
            eval_loss,
            lr,
            unclipped_frac: update.unclipped_frac,
            h_norm: state.h_norm(),
            grad_norm: g.norm_l2(),
            grad_clip_triggered: clipped,
        });
    }
    Ok(Trained {
        record: RunRecord {
            rows,
            status: RunStatus::Completed,
        },
        theta,
    })
}

/// First step whose eval loss is at or below `target`.
pub fn steps_to_target(record: &RunRecord, target: f64) -> Option<u64> {
    record
        .rows
        .iter()
        .find(|r| r.eval_loss <= target)
        .map(|r| r.step)
}

/// `steps_slow / steps_fast` to reach `target`. The slow record must come
/// from the best configuration of its own grid for the ratio to mean that
/// the fast optimizer is that many times faster.
pub fn speedup_ratio(fast: &RunRecord, slow: &RunRecord, target: f64) -> Result<f64> {
    let f = steps_to_target(fast, target)
        .ok_or_else(|| Error::Incomparable(format!("fast run never reaches {target}")))?;
    let s = steps_to_target(slow, target)
        .ok_or_else(|| Error::Incomparable(format!("slow run never reaches {target}")))?;
    Ok(s as f64 / f as f64)
}
