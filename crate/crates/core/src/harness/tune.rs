use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::problems::Problem;

use super::config::ExperimentConfig;
use super::run::train;

pub const BAND: (f64, f64) = (0.1, 0.5);
pub const MAX_RESTARTS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TuneDecision {
    Accept,
    Halve,
    Double,
}

/// The unclipped fraction grows with γ: too many unclipped coordinates means
/// halve γ, too few means double it.
pub fn tune_decision(unclipped_frac: f64) -> TuneDecision {
    if unclipped_frac > BAND.1 {
        TuneDecision::Halve
    } else if unclipped_frac < BAND.0 {
        TuneDecision::Double
    } else {
        TuneDecision::Accept
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub gamma: f64,
    pub unclipped_frac: f64,
    pub restarts: usize,
    /// Every `(γ, measured fraction)` probe in order.
    pub history: Vec<(f64, f64)>,
}

/// The search loop with the measurement injected.
pub fn tune_gamma_with(
    gamma0: f64,
    mut measure: impl FnMut(f64) -> Result<f64>,
) -> Result<TuneResult> {
    if !(gamma0 > 0.0) {
        return Err(Error::Parameter("initial gamma must be positive".into()));
    }
    let mut gamma = gamma0;
    let mut history: Vec<(f64, f64)> = Vec::new();
    for restarts in 0..=MAX_RESTARTS {
        let frac = measure(gamma)?;
        history.push((gamma, frac));
        let next = match tune_decision(frac) {
            TuneDecision::Accept => {
                return Ok(TuneResult {
                    gamma,
                    unclipped_frac: frac,
                    restarts,
                    history,
                })
            }
            TuneDecision::Halve => gamma * 0.5,
            TuneDecision::Double => gamma * 2.0,
        };
        if history.iter().any(|&(g, _)| g == next) {
            return Err(Error::Tuning(format!(
                "the band [{}, {}] falls between neighbouring gammas; probes: {}",
                BAND.0,
                BAND.1,
                describe(&history)
            )));
        }
        gamma = next;
    }
    Err(Error::Tuning(format!(
        "no gamma within 2^±{MAX_RESTARTS} of {gamma0} lands in [{}, {}]; probes: {}",
        BAND.0,
        BAND.1,
        describe(&history)
    )))
}

fn describe(history: &[(f64, f64)]) -> String {
    history
        .iter()
        .map(|(g, f)| format!("gamma={g:e} frac={f:.3}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Mean unclipped fraction over the first `probe_steps` steps of `cfg`'s
/// schedule, restarting from scratch for each γ.
pub fn tune_gamma(problem: &dyn Problem, cfg: &ExperimentConfig, probe_steps: u64) -> Result<TuneResult> {
    let sophia = match &cfg.optimizer {
        OptimizerConfig::Sophia(s) => s.clone(),
        _ => return Err(Error::Config("gamma tuning needs a sophia optimizer".into())),
    };
    if probe_steps < sophia.k {
        return Err(Error::Parameter(format!(
            "probe_steps ({probe_steps}) must be at least k ({})",
            sophia.k
        )));
    }
    tune_gamma_with(sophia.gamma, |gamma| {
        let mut probe = cfg.clone();
        if let OptimizerConfig::Sophia(s) = &mut probe.optimizer {
            s.gamma = gamma;
        }
        let run = train(&probe, problem, Some(probe_steps))?;
        if run.record.diverged() || run.record.rows.is_empty() {
            return Err(Error::Tuning(format!("probe run with gamma={gamma:e} diverged")));
        }
        let rows = &run.record.rows;
        Ok(rows.iter().map(|r| r.unclipped_frac).sum::<f64>() / rows.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decisions() {
        assert_eq!(tune_decision(0.8), TuneDecision::Halve);
        assert_eq!(tune_decision(0.3), TuneDecision::Accept);
        assert_eq!(tune_decision(0.05), TuneDecision::Double);
        assert_eq!(tune_decision(0.1), TuneDecision::Accept);
        assert_eq!(tune_decision(0.5), TuneDecision::Accept);
    }

    #[test]
    fn converges_on_monotone_response() {
        let r = tune_gamma_with(1.0, |g| Ok((5.0 * g).min(1.0))).unwrap();
        assert_eq!(r.gamma, 0.0625);
        assert!((0.1..=0.5).contains(&r.unclipped_frac));
        assert_eq!(r.history.len(), r.restarts + 1);
        let r = tune_gamma_with(0.3, |_| Ok(0.3)).unwrap();
        assert_eq!((r.gamma, r.restarts), (0.3, 0));
    }

    #[test]
    fn fails_when_unreachable_or_cycling() {
        let err = tune_gamma_with(1.0, |_| Ok(0.9)).unwrap_err();
        assert_eq!(err.kind(), "tuning");
        let err = tune_gamma_with(1.0, |g| Ok(if g < 1.0 { 0.05 } else { 0.9 })).unwrap_err();
        assert!(err.to_string().contains("neighbouring"), "{err}");
    }
}
