use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problems::Problem;

use super::config::{ExperimentConfig, ExperimentGrid};
use super::run::{speedup_ratio, steps_to_target, train, RunRecord};

#[derive(Clone, Debug)]
pub struct GridPoint {
    pub peak_lr: f64,
    pub record: RunRecord,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub slow: Vec<GridPoint>,
    /// Index into `slow` of the lowest final eval loss among stable runs.
    pub best: usize,
    /// Largest grid learning rate whose run did not diverge.
    pub largest_stable_lr: f64,
    pub target: f64,
    pub fast: RunRecord,
    pub slow_steps: Option<u64>,
    pub fast_steps: Option<u64>,
    /// `None` when either side misses the target.
    pub speedup: Option<f64>,
}

/// Runs every point of the slow grid (in parallel when enabled).
pub fn run_grid(grid: &ExperimentGrid, problem: &dyn Problem, exec: Exec) -> Result<Vec<GridPoint>> {
    let configs = grid.configs();
    exec.map(&configs, |cfg| train(cfg, problem, None))
        .into_iter()
        .zip(&configs)
        .map(|(r, c)| {
            Ok(GridPoint {
                peak_lr: c.schedule.peak_lr,
                record: r?.record,
            })
        })
        .collect()
}

/// Speed comparison with the slow side at its grid-best learning rate.
/// Without an explicit `target`, the target is the best final eval loss the
/// slow grid reaches within its budget.
pub fn compare(
    slow: &ExperimentGrid,
    fast: &ExperimentConfig,
    target: Option<f64>,
    exec: Exec,
) -> Result<Comparison> {
    if slow.base.problem != fast.problem {
        return Err(Error::Config(
            "slow and fast configs must describe the same problem".into(),
        ));
    }
    let problem = fast.problem.build()?;
    let points = run_grid(slow, problem.as_ref(), exec)?;
    let fast_record = train(fast, problem.as_ref(), None)?.record;
    summarize(points, fast_record, target)
}

pub fn summarize(points: Vec<GridPoint>, fast: RunRecord, target: Option<f64>) -> Result<Comparison> {
    let stable: Vec<usize> = (0..points.len()).filter(|&i| !points[i].record.diverged()).collect();
    let best = stable
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let la = points[a].record.final_eval_loss().unwrap_or(f64::INFINITY);
            let lb = points[b].record.final_eval_loss().unwrap_or(f64::INFINITY);
            la.total_cmp(&lb)
        })
        .ok_or_else(|| Error::Incomparable("every slow grid point diverged".into()))?;
    let largest_stable_lr = stable
        .iter()
        .map(|&i| points[i].peak_lr)
        .fold(f64::MIN, f64::max);
    let target = match target {
        Some(t) => t,
        None => points[best]
            .record
            .final_eval_loss()
            .ok_or_else(|| Error::Incomparable("best slow run has no rows".into()))?,
    };
    let slow_record = &points[best].record;
    Ok(Comparison {
        slow_steps: steps_to_target(slow_record, target),
        fast_steps: steps_to_target(&fast, target),
        speedup: speedup_ratio(&fast, slow_record, target).ok(),
        best,
        largest_stable_lr,
        target,
        fast,
        slow: points,
    })
}
