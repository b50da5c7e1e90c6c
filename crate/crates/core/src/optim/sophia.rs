use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, HessianEstimate};
use crate::tensor::Tensor;

/// What the curvature EMA tracks and how the denominator is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerMode {
    /// `m / max(γh, ε)` with `h` the EMA of the estimates.
    #[default]
    Sophia,
    /// `m / max(γ√h, ε)` with `h` the EMA of squared estimates.
    AdahessianLike,
    /// `m / max(γh, ε)` with `h` the EMA of `g⊙g`.
    EmpiricalFisher,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SophiaConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub eps: f64,
    /// Curvature is refreshed on steps 1, k+1, 2k+1, ...
    pub k: u64,
    pub weight_decay: f64,
    pub estimator: EstimatorKind,
    pub grad_clip_norm: Option<f64>,
    pub mode: PreconditionerMode,
}

impl SophiaConfig {
    pub fn hutchinson() -> Self {
        Self::with_estimator(EstimatorKind::Hutchinson)
    }

    pub fn gnb() -> Self {
        Self::with_estimator(EstimatorKind::Gnb)
    }

    pub fn with_estimator(estimator: EstimatorKind) -> Self {
        Self {
            beta1: 0.96,
            beta2: 0.99,
            gamma: default_gamma(estimator),
            eps: 1e-12,
            k: 10,
            weight_decay: 0.0,
            estimator,
            grad_clip_norm: Some(1.0),
            mode: match estimator {
                EstimatorKind::EmpiricalFisher => PreconditionerMode::EmpiricalFisher,
                _ => PreconditionerMode::Sophia,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Parameter("beta1 and beta2 must lie in (0, 1)".into()));
        }
        if !(self.gamma > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Parameter("gamma and eps must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::Parameter("hessian interval k must be ≥ 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Parameter("weight decay must be ≥ 0".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Parameter("gradient clip norm must be positive".into()));
            }
        }
        Ok(())
    }

    /// `t ≡ 1 (mod k)` for 1-indexed `t`; every step when `k = 1`.
    pub fn is_hessian_step(&self, t: u64) -> bool {
        (t - 1).is_multiple_of(self.k)
    }
}

pub fn default_gamma(estimator: EstimatorKind) -> f64 {
    match estimator {
        EstimatorKind::Hutchinson => 0.01,
        EstimatorKind::Gnb | EstimatorKind::EmpiricalFisher => 0.05,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SophiaState {
    pub m: Tensor,
    pub h: Tensor,
    /// The step about to be taken, starting at 1.
    pub t: u64,
}

impl SophiaState {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(shape),
            h: Tensor::zeros(shape),
            t: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SophiaStep {
    pub theta: Tensor,
    pub state: SophiaState,
    /// Fraction of coordinates with `|ratio| < 1`.
    pub unclipped_frac: f64,
}

/// Elementwise clamp to `[−ρ, ρ]`.
pub fn clip(z: &Tensor, rho: f64) -> Tensor {
    assert!(rho > 0.0, "clip threshold must be positive");
    z.map(|x| x.clamp(-rho, rho))
}

/// Pre-clip ratio for the given mode.
pub fn precondition(mode: PreconditionerMode, m: &Tensor, h_ema: &Tensor, cfg: &SophiaConfig) -> Tensor {
    let (gamma, eps) = (cfg.gamma, cfg.eps);
    let denom = |h: f64| match mode {
        PreconditionerMode::Sophia | PreconditionerMode::EmpiricalFisher => (gamma * h).max(eps),
        PreconditionerMode::AdahessianLike => (gamma * h.max(0.0).sqrt()).max(eps),
    };
    m.zip_map(h_ema, |m, h| m / denom(h))
        .expect("m and h share a shape")
}

fn check_shapes(theta: &Tensor, g: &Tensor, state: &SophiaState) -> Result<()> {
    if g.shape() != theta.shape() || state.m.shape() != theta.shape() || state.h.shape() != theta.shape() {
        return Err(Error::Shape(format!(
            "parameters {:?}, gradient {:?}, state {:?}/{:?}",
            theta.shape(),
            g.shape(),
            state.m.shape(),
            state.h.shape()
        )));
    }
    Ok(())
}

/// One clipped preconditioned step. `h_hat` must be supplied exactly on
/// Hessian steps; the state is left untouched if it is not.
pub fn sophia_step(
    theta: &Tensor,
    g: &Tensor,
    h_hat: Option<&HessianEstimate>,
    state: &SophiaState,
    cfg: &SophiaConfig,
    lr: f64,
) -> Result<SophiaStep> {
    check_shapes(theta, g, state)?;
    let t = state.t;
    if t == 0 {
        return Err(Error::Schedule {
            step: 0,
            reason: "steps are numbered from 1",
        });
    }
    let hessian_step = cfg.is_hessian_step(t);
    match (hessian_step, h_hat) {
        (true, None) => {
            return Err(Error::Schedule {
                step: t,
                reason: "hessian estimate missing on a hessian step",
            })
        }
        (false, Some(_)) => {
            return Err(Error::Schedule {
                step: t,
                reason: "hessian estimate supplied off schedule",
            })
        }
        _ => {}
    }
    if let Some(est) = h_hat {
        if est.values.shape() != theta.shape() {
            return Err(Error::Shape(format!(
                "hessian estimate {:?} vs parameters {:?}",
                est.values.shape(),
                theta.shape()
            )));
        }
    }

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let m = state.m.zip_map(g, |m, g| b1 * m + (1.0 - b1) * g)?;
    let h = match h_hat {
        Some(est) => {
            let square = cfg.mode == PreconditionerMode::AdahessianLike;
            state.h.zip_map(&est.values, |h, e| {
                let e = if square { e * e } else { e };
                b2 * h + (1.0 - b2) * e
            })?
        }
        None => state.h.clone(),
    };

    let ratio = precondition(cfg.mode, &m, &h, cfg);
    let unclipped = ratio.data().iter().filter(|r| r.abs() < 1.0).count();
    let decay = lr * cfg.weight_decay;
    let theta = theta.zip_map(&ratio, |p, r| {
        let p = p - decay * p;
        p - lr * r.clamp(-1.0, 1.0)
    })?;
    Ok(SophiaStep {
        theta,
        state: SophiaState { m, h, t: t + 1 },
        unclipped_frac: unclipped as f64 / ratio.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_cfg(beta1: f64, gamma: f64, wd: f64) -> SophiaConfig {
        SophiaConfig {
            beta1,
            gamma,
            weight_decay: wd,
            k: 2,
            ..SophiaConfig::gnb()
        }
    }

    fn state(m: f64, h: f64, t: u64) -> SophiaState {
        SophiaState {
            m: Tensor::from_vec(vec![m]),
            h: Tensor::from_vec(vec![h]),
            t,
        }
    }

    fn one(x: f64) -> Tensor {
        Tensor::from_vec(vec![x])
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&Tensor::from_vec(vec![2.0, -0.5]), 1.0).data(), &[1.0, -0.5]);
        assert_eq!(clip(&one(0.0), 0.3).data(), &[0.0]);
        assert_eq!(clip(&one(-3.0), 1.0).data(), &[-1.0]);
    }

    #[test]
    fn defaults() {
        let h = SophiaConfig::hutchinson();
        assert_eq!((h.beta1, h.beta2, h.eps, h.k, h.gamma), (0.96, 0.99, 1e-12, 10, 0.01));
        assert_eq!(SophiaConfig::gnb().gamma, 0.05);
    }

    #[test]
    fn hand_evaluated_step() {
        // step 2 is off schedule for k=2, so h stays at 0.5
        let out = sophia_step(&one(1.0), &one(0.2), None, &state(0.0, 0.5, 2), &scalar_cfg(0.9, 0.05, 0.0), 0.1)
            .unwrap();
        assert!((out.state.m.item() - 0.02).abs() < 1e-15);
        assert!((out.theta.item() - 0.92).abs() < 1e-15);
        assert_eq!(out.unclipped_frac, 1.0);
    }

    #[test]
    fn negative_curvature_falls_back_to_sign() {
        let out = sophia_step(&one(1.0), &one(0.2), None, &state(0.0, -1.0, 2), &scalar_cfg(0.9, 0.05, 0.0), 0.1)
            .unwrap();
        assert_eq!(out.theta.item(), 0.9);
        assert_eq!(out.unclipped_frac, 0.0);
    }

    #[test]
    fn zero_gradient_and_decay() {
        let cfg = scalar_cfg(0.9, 0.05, 0.0);
        let out = sophia_step(&one(1.0), &one(0.0), None, &state(0.0, 0.5, 2), &cfg, 0.1).unwrap();
        assert_eq!(out.theta.item(), 1.0);
        let cfg = scalar_cfg(0.9, 0.05, 0.2);
        let out = sophia_step(&one(1.0), &one(0.0), None, &state(0.0, 0.5, 2), &cfg, 0.1).unwrap();
        assert!((out.theta.item() - 0.98).abs() < 1e-15);
    }

    #[test]
    fn schedule_errors_leave_state_alone() {
        let cfg = scalar_cfg(0.9, 0.05, 0.0);
        let s = state(0.3, 0.5, 3);
        let err = sophia_step(&one(1.0), &one(1.0), None, &s, &cfg, 0.1).unwrap_err();
        assert_eq!(err.kind(), "schedule");
        let est = HessianEstimate {
            values: one(1.0),
            kind: EstimatorKind::Gnb,
            samples: 1,
        };
        let err = sophia_step(&one(1.0), &one(1.0), Some(&est), &state(0.3, 0.5, 2), &cfg, 0.1).unwrap_err();
        assert_eq!(err.kind(), "schedule");
    }

    #[test]
    fn k_one_refreshes_every_step() {
        let cfg = SophiaConfig {
            k: 1,
            ..SophiaConfig::gnb()
        };
        assert!((1..20).all(|t| cfg.is_hessian_step(t)));
        let cfg = SophiaConfig::gnb();
        let steps: Vec<u64> = (1..32).filter(|&t| cfg.is_hessian_step(t)).collect();
        assert_eq!(steps, vec![1, 11, 21, 31]);
    }

    #[test]
    fn preconditioner_modes() {
        let cfg = SophiaConfig {
            gamma: 0.5,
            ..SophiaConfig::gnb()
        };
        let m = one(3.0);
        let r = precondition(PreconditionerMode::AdahessianLike, &m, &one(4.0), &cfg);
        assert_eq!(r.item(), 3.0 / (2.0 * 0.5));
        let r = precondition(PreconditionerMode::EmpiricalFisher, &m, &one(0.0), &cfg);
        assert_eq!(r.item(), 3.0 / cfg.eps);
        let r = precondition(PreconditionerMode::Sophia, &m, &one(2.0), &cfg);
        assert_eq!(r.item(), 3.0 / (0.5 * 2.0));
    }
}
