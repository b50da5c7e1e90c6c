use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Gd,
    Signgd,
    /// Sign of the momentum EMA: clipping with no preconditioner.
    SignMomentum,
    Adamw,
    Lion,
    /// Momentum divided by its ℓ2 norm.
    Normalize,
}

impl BaselineKind {
    pub fn uses_momentum(self) -> bool {
        !matches!(self, BaselineKind::Gd | BaselineKind::Signgd)
    }

    pub fn uses_second_moment(self) -> bool {
        self == BaselineKind::Adamw
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: Option<f64>,
}

impl BaselineHyper {
    pub fn defaults(kind: BaselineKind) -> Self {
        let (beta1, beta2) = match kind {
            BaselineKind::Adamw => (0.9, 0.95),
            BaselineKind::Lion => (0.95, 0.98),
            BaselineKind::SignMomentum | BaselineKind::Normalize => (0.96, 0.99),
            BaselineKind::Gd | BaselineKind::Signgd => (0.0, 0.0),
        };
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip_norm: Some(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    pub m: Option<Tensor>,
    pub v: Option<Tensor>,
    /// The step about to be taken, starting at 1.
    pub t: u64,
}

impl BaselineState {
    pub fn new(kind: BaselineKind, shape: &[usize]) -> Self {
        Self {
            m: kind.uses_momentum().then(|| Tensor::zeros(shape)),
            v: kind.uses_second_moment().then(|| Tensor::zeros(shape)),
            t: 1,
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn layout_error(kind: BaselineKind) -> Error {
    Error::Precondition(format!("optimizer state layout does not match {kind:?}"))
}

/// One step of a first-order baseline. Weight decay is decoupled:
/// `θ ← θ − ηλθ − η·direction`.
pub fn baseline_step(
    kind: BaselineKind,
    theta: &Tensor,
    g: &Tensor,
    state: &BaselineState,
    hyper: &BaselineHyper,
    lr: f64,
) -> Result<(Tensor, BaselineState)> {
    if g.shape() != theta.shape() {
        return Err(Error::Shape(format!(
            "gradient {:?} vs parameters {:?}",
            g.shape(),
            theta.shape()
        )));
    }
    if state.m.is_some() != kind.uses_momentum() || state.v.is_some() != kind.uses_second_moment() {
        return Err(layout_error(kind));
    }
    for s in state.m.iter().chain(state.v.iter()) {
        if s.shape() != theta.shape() {
            return Err(layout_error(kind));
        }
    }
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let decay = lr * hyper.weight_decay;
    let ema = |m: &Tensor, x: &Tensor, b: f64| m.zip_map(x, |m, x| b * m + (1.0 - b) * x);
    let apply = |dir: &Tensor| theta.zip_map(dir, |p, d| p - decay * p - lr * d);

    let mut next = BaselineState {
        m: state.m.clone(),
        v: state.v.clone(),
        t: state.t + 1,
    };
    let theta = match kind {
        BaselineKind::Gd => apply(g)?,
        BaselineKind::Signgd => apply(&g.map(sign))?,
        BaselineKind::SignMomentum => {
            let m = ema(state.m.as_ref().unwrap(), g, b1)?;
            let th = apply(&m.map(sign))?;
            next.m = Some(m);
            th
        }
        BaselineKind::Normalize => {
            let m = ema(state.m.as_ref().unwrap(), g, b1)?;
            let norm = m.norm_l2();
            let th = if norm > 0.0 {
                apply(&m.scale(1.0 / norm))?
            } else {
                theta.clone()
            };
            next.m = Some(m);
            th
        }
        BaselineKind::Adamw => {
            let m = ema(state.m.as_ref().unwrap(), g, b1)?;
            let v = state.v.as_ref().unwrap().zip_map(g, |v, g| b2 * v + (1.0 - b2) * g * g)?;
            let t = state.t.max(1) as i32;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            let dir = m.zip_map(&v, |m, v| (m / c1) / ((v / c2).sqrt() + hyper.eps))?;
            let th = apply(&dir)?;
            next.m = Some(m);
            next.v = Some(v);
            th
        }
        BaselineKind::Lion => {
            let m = state.m.as_ref().unwrap();
            let c = m.zip_map(g, |m, g| sign(b1 * m + (1.0 - b1) * g))?;
            let th = apply(&c)?;
            next.m = Some(ema(m, g, b2)?);
            th
        }
    };
    Ok((theta, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(kind: BaselineKind, theta: &[f64], g: &[f64], lr: f64) -> Tensor {
        let theta = Tensor::from_vec(theta.to_vec());
        let state = BaselineState::new(kind, theta.shape());
        let g = Tensor::from_vec(g.to_vec());
        baseline_step(kind, &theta, &g, &state, &BaselineHyper::defaults(kind), lr)
            .unwrap()
            .0
    }

    #[test]
    fn signgd_example() {
        assert_eq!(run(BaselineKind::Signgd, &[0.0, 0.0], &[0.3, -2.0], 0.1).data(), &[-0.1, 0.1]);
        assert_eq!(run(BaselineKind::Signgd, &[1.0], &[0.0], 0.1).data(), &[1.0]);
    }

    #[test]
    fn gd_exact() {
        assert_eq!(run(BaselineKind::Gd, &[1.0, 2.0], &[0.5, -1.0], 0.1).data(), &[1.0 - 0.05, 2.0 + 0.1]);
    }

    #[test]
    fn adamw_first_step_is_lr() {
        let th = run(BaselineKind::Adamw, &[0.0], &[1.0], 0.01);
        assert!((th.item() + 0.01).abs() < 1e-9);
    }

    #[test]
    fn lion_first_step() {
        assert_eq!(run(BaselineKind::Lion, &[0.5], &[1.0], 0.1).item(), 0.4);
    }

    #[test]
    fn normalize_skips_zero_momentum() {
        assert_eq!(run(BaselineKind::Normalize, &[0.5, 1.0], &[0.0, 0.0], 0.1).data(), &[0.5, 1.0]);
        let th = run(BaselineKind::Normalize, &[0.0, 0.0], &[3.0, 4.0], 1.0);
        assert!((th.data()[0] + 0.6).abs() < 1e-15 && (th.data()[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let th = Tensor::from_vec(vec![0.0]);
        let state = BaselineState::new(BaselineKind::Gd, th.shape());
        let err = baseline_step(
            BaselineKind::Adamw,
            &th,
            &th,
            &state,
            &BaselineHyper::defaults(BaselineKind::Adamw),
            0.1,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "precondition");
    }
}
