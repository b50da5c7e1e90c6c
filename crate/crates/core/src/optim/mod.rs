//! The clipped diagonal-Hessian update and the first-order baselines.

mod baselines;
mod sophia;

pub use baselines::{baseline_step, BaselineHyper, BaselineKind, BaselineState};
pub use sophia::{
    clip, default_gamma, precondition, sophia_step, PreconditionerMode, SophiaConfig, SophiaState,
    SophiaStep,
};

use crate::error::Result;
use crate::estimators::{EstimatorKind, HessianEstimate};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerConfig {
    Sophia(SophiaConfig),
    Baseline {
        kind: BaselineKind,
        hyper: BaselineHyper,
    },
}

impl OptimizerConfig {
    pub fn baseline(kind: BaselineKind) -> Self {
        OptimizerConfig::Baseline {
            kind,
            hyper: BaselineHyper::defaults(kind),
        }
    }

    pub fn name(&self) -> String {
        match self {
            OptimizerConfig::Sophia(c) => format!("sophia-{:?}", c.estimator).to_lowercase(),
            OptimizerConfig::Baseline { kind, .. } => format!("{kind:?}").to_lowercase(),
        }
    }

    /// Global-norm threshold applied to the update-path gradient.
    pub fn grad_clip_norm(&self) -> Option<f64> {
        match self {
            OptimizerConfig::Sophia(c) => c.grad_clip_norm,
            OptimizerConfig::Baseline { hyper, .. } => hyper.grad_clip_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Sophia(c) => c.validate(),
            OptimizerConfig::Baseline { kind, hyper } => {
                let unit = |x: f64| (0.0..1.0).contains(&x);
                if kind.uses_momentum() && (!unit(hyper.beta1) || !unit(hyper.beta2)) {
                    return Err(crate::Error::Parameter("betas must lie in [0, 1)".into()));
                }
                if !(hyper.eps > 0.0) || !(hyper.weight_decay >= 0.0) {
                    return Err(crate::Error::Parameter(
                        "eps must be positive and weight decay non-negative".into(),
                    ));
                }
                if matches!(hyper.grad_clip_norm, Some(c) if !(c > 0.0)) {
                    return Err(crate::Error::Parameter(
                        "gradient clip norm must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The estimator to run at step `t`, if any.
    pub fn estimator_due(&self, t: u64) -> Option<EstimatorKind> {
        match self {
            OptimizerConfig::Sophia(c) if c.is_hessian_step(t) => Some(c.estimator),
            _ => None,
        }
    }

    pub fn init_state(&self, shape: &[usize]) -> OptimizerState {
        match self {
            OptimizerConfig::Sophia(_) => OptimizerState::Sophia(SophiaState::new(shape)),
            OptimizerConfig::Baseline { kind, .. } => {
                OptimizerState::Baseline(BaselineState::new(*kind, shape))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Sophia(SophiaState),
    Baseline(BaselineState),
}

impl OptimizerState {
    /// ‖h‖₂ of the curvature EMA; 0 for optimizers without one.
    pub fn h_norm(&self) -> f64 {
        match self {
            OptimizerState::Sophia(s) => s.h.norm_l2(),
            OptimizerState::Baseline(_) => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub theta: Tensor,
    /// Coordinates whose update was not clipped. First-order baselines report
    /// 1 for magnitude-preserving kinds and 0 for sign-based ones.
    pub unclipped_frac: f64,
}

pub fn step(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    theta: &Tensor,
    g: &Tensor,
    h_hat: Option<&HessianEstimate>,
    lr: f64,
) -> Result<Update> {
    match (cfg, &*state) {
        (OptimizerConfig::Sophia(c), OptimizerState::Sophia(s)) => {
            let out = sophia_step(theta, g, h_hat, s, c, lr)?;
            *state = OptimizerState::Sophia(out.state);
            Ok(Update {
                theta: out.theta,
                unclipped_frac: out.unclipped_frac,
            })
        }
        (OptimizerConfig::Baseline { kind, hyper }, OptimizerState::Baseline(s)) => {
            let (theta, next) = baseline_step(*kind, theta, g, s, hyper, lr)?;
            *state = OptimizerState::Baseline(next);
            let unclipped_frac = match kind {
                BaselineKind::Gd | BaselineKind::Adamw | BaselineKind::Normalize => 1.0,
                BaselineKind::Signgd | BaselineKind::SignMomentum | BaselineKind::Lion => 0.0,
            };
            Ok(Update {
                theta,
                unclipped_frac,
            })
        }
        _ => Err(crate::Error::Precondition(
            "optimizer state does not belong to this optimizer".into(),
        )),
    }
}
