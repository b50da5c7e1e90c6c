//! The two-dimensional sharp/flat landscape under GD-style, sign, Newton and
//! clipped-Newton updates.
//!
//! The starting point is not prescribed anywhere, so [`scan_inits`] searches
//! a small grid for points where vanilla Newton settles on a stationary point
//! that is not the minimum while the clipped update reaches the minimum.
//! [`TOY2D_INIT`] records the point that scan selects.

use crate::autodiff::{value_and_grad, Tape, Var};
use crate::error::{Error, Result};
use crate::estimators::exact_hessian_diag_with;
use crate::exec::Exec;
use crate::problems::toy2d_loss;
use crate::tensor::Tensor;
use crate::theory::log_grid;

/// The first point [`scan_inits`] returns; a test re-runs the scan to
/// confirm it. Newton is drawn into the local maximum of `L1` at θ₁ = 0.
pub const TOY2D_INIT: [f64; 2] = [0.05, 0.0];
pub const TOY_ETA: f64 = 0.5;
pub const TOY_RHO: f64 = 1.0;
pub const TOY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ToyUpdate {
    Gd { eta: f64 },
    SignGd { eta: f64 },
    /// Per-coordinate Newton, `θ − η g/h`, with no safeguard.
    Newton { eta: f64 },
    /// `θ − η clip(g / max(h, ε), ρ)`.
    Clipped { eta: f64, rho: f64, eps: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyPoint {
    pub theta: [f64; 2],
    pub loss: f64,
    pub grad: [f64; 2],
}

fn evaluate(theta: [f64; 2]) -> Result<ToyPoint> {
    let (loss, g) = value_and_grad(toy2d_loss, &Tensor::from_vec(theta.to_vec()))?;
    Ok(ToyPoint {
        theta,
        loss,
        grad: [g.data()[0], g.data()[1]],
    })
}

fn hessian_diag(theta: [f64; 2]) -> Result<[f64; 2]> {
    let h = exact_hessian_diag_with(
        |t: &mut Tape, p: Var| toy2d_loss(t, p),
        &Tensor::from_vec(theta.to_vec()),
        Exec::Sequential,
    )?;
    Ok([h.data()[0], h.data()[1]])
}

/// Iterates `update` for `steps` steps; `traj[t]` is the point after `t`
/// steps. Stops early if an iterate stops being finite.
pub fn trajectory(init: [f64; 2], update: ToyUpdate, steps: usize) -> Result<Vec<ToyPoint>> {
    let mut traj = vec![evaluate(init)?];
    for _ in 0..steps {
        let p = traj.last().unwrap();
        let (th, g) = (p.theta, p.grad);
        let next = match update {
            ToyUpdate::Gd { eta } => [th[0] - eta * g[0], th[1] - eta * g[1]],
            ToyUpdate::SignGd { eta } => {
                let s = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                [th[0] - eta * s(g[0]), th[1] - eta * s(g[1])]
            }
            ToyUpdate::Newton { eta } => {
                let h = hessian_diag(th)?;
                [th[0] - eta * g[0] / h[0], th[1] - eta * g[1] / h[1]]
            }
            ToyUpdate::Clipped { eta, rho, eps } => {
                let h = hessian_diag(th)?;
                let c = |g: f64, h: f64| (g / h.max(eps)).clamp(-rho, rho);
                [th[0] - eta * c(g[0], h[0]), th[1] - eta * c(g[1], h[1])]
            }
        };
        if !next.iter().all(|x| x.is_finite()) {
            break;
        }
        match evaluate(next) {
            Ok(p) => traj.push(p),
            Err(Error::NonFinite { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Steps until the loss first drops to `target` or below.
pub fn steps_to_loss(traj: &[ToyPoint], target: f64) -> Option<usize> {
    traj.iter().position(|p| p.loss <= target)
}

#[derive(Clone, Debug)]
pub struct ToyReport {
    pub init: [f64; 2],
    pub newton_final: ToyPoint,
    pub clipped_steps_to_1e6: Option<usize>,
    pub clipped_steps_to_1e3: Option<usize>,
    /// Best SignGD step count to 1e-3 over the η grid, with that η.
    pub signgd_best: Option<(usize, f64)>,
}

impl ToyReport {
    pub fn newton_stuck(&self) -> bool {
        let g = self.newton_final.grad;
        (g[0] * g[0] + g[1] * g[1]).sqrt() < 1e-8 && self.newton_final.loss > 1.0
    }

    pub fn clipped_converges(&self) -> bool {
        matches!(self.clipped_steps_to_1e6, Some(s) if s <= 200)
    }

    pub fn signgd_slower(&self) -> bool {
        match (self.clipped_steps_to_1e3, self.signgd_best) {
            (Some(c), Some((s, _))) => s > c,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn reproduces(&self) -> bool {
        self.newton_stuck() && self.clipped_converges() && self.signgd_slower()
    }
}

pub const SIGNGD_GRID: (f64, f64, usize) = (1e-4, 1.0, 20);
pub const SIGNGD_MAX_STEPS: usize = 100_000;

pub fn toy_experiment(init: [f64; 2]) -> Result<ToyReport> {
    let newton = trajectory(init, ToyUpdate::Newton { eta: 1.0 }, 100)?;
    let clipped = trajectory(
        init,
        ToyUpdate::Clipped {
            eta: TOY_ETA,
            rho: TOY_RHO,
            eps: TOY_EPS,
        },
        200,
    )?;
    let clipped_1e3 = steps_to_loss(&clipped, 1e-3);
    let (lo, hi, n) = SIGNGD_GRID;
    let mut signgd_best: Option<(usize, f64)> = None;
    for eta in log_grid(lo, hi, n) {
        let traj = sign_trajectory_until(init, eta, 1e-3, SIGNGD_MAX_STEPS)?;
        if let Some(s) = traj {
            if signgd_best.is_none_or(|(b, _)| s < b) {
                signgd_best = Some((s, eta));
            }
        }
    }
    Ok(ToyReport {
        init,
        newton_final: *newton.last().unwrap(),
        clipped_steps_to_1e6: steps_to_loss(&clipped, 1e-6),
        clipped_steps_to_1e3: clipped_1e3,
        signgd_best,
    })
}

/// Closed-form loss and gradient, used for the long SignGD sweeps.
pub fn toy2d_closed_form(theta: [f64; 2]) -> (f64, [f64; 2]) {
    let (x, y) = (theta[0], theta[1]);
    let l1 = 8.0 * (x - 1.0).powi(2) * (1.3 * x * x + 2.0 * x + 1.0);
    let l2 = 0.5 * (y - 4.0).powi(2);
    let g1 = 8.0 * (x - 1.0) * x * (5.2 * x + 3.4);
    (l1 + l2, [g1, y - 4.0])
}

/// SignGD steps to `target`, without storing the path.
fn sign_trajectory_until(init: [f64; 2], eta: f64, target: f64, max_steps: usize) -> Result<Option<usize>> {
    let s = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let mut th = init;
    for t in 0..=max_steps {
        let (loss, g) = toy2d_closed_form(th);
        if loss <= target {
            return Ok(Some(t));
        }
        th = [th[0] - eta * s(g[0]), th[1] - eta * s(g[1])];
    }
    Ok(None)
}

/// Grid points from which the qualitative picture holds, in scan order.
pub fn scan_inits(exec: Exec) -> Vec<[f64; 2]> {
    let mut grid = Vec::new();
    for j in 0..=4 {
        for i in -12..=12 {
            grid.push([i as f64 * 0.05, j as f64 * 0.5]);
        }
    }
    exec.map(&grid, |&init| match toy_experiment(init) {
        Ok(r) if r.reproduces() => Some(init),
        _ => None,
    })
    .into_iter()
    .flatten()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_tape() {
        for th in [[0.0, 0.0], [0.7, -1.0], [-0.4, 2.5]] {
            let (l, g) = toy2d_closed_form(th);
            let p = evaluate(th).unwrap();
            assert!((l - p.loss).abs() < 1e-12);
            assert!((g[0] - p.grad[0]).abs() < 1e-12 && (g[1] - p.grad[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn recorded_init_is_first_scan_hit() {
        let hits = scan_inits(Exec::default());
        assert_eq!(hits.first(), Some(&TOY2D_INIT));
        assert!(toy_experiment(TOY2D_INIT).unwrap().reproduces());
    }

    #[test]
    fn gd_decreases_from_init() {
        let t = trajectory(TOY2D_INIT, ToyUpdate::Gd { eta: 0.01 }, 50).unwrap();
        assert_eq!(t.len(), 51);
        assert!(t.last().unwrap().loss < t[0].loss);
    }
}
