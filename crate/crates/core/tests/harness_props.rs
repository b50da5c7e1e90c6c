use proptest::prelude::*;
use proptest::test_runner::Config;

use sophia_lab::autodiff::value_and_grad;
use sophia_lab::estimators::EstimatorKind;
use sophia_lab::harness::{
    cosine_lr, grad_clip_global_norm, parse_csv, run_experiment, to_csv, tune_decision,
    tune_gamma_with, ExperimentConfig, LrSchedule, ProblemSpec, RunStatus, TuneDecision,
};
use sophia_lab::optim::{BaselineKind, OptimizerConfig, SophiaConfig};
use sophia_lab::problems::{make_quadratic, toy2d_loss, TinyLmConfig};
use sophia_lab::{Error, Tensor};

fn optimizer(which: u8, clip: f64) -> OptimizerConfig {
    match which % 4 {
        0 => OptimizerConfig::Sophia(SophiaConfig {
            grad_clip_norm: Some(clip),
            ..SophiaConfig::gnb()
        }),
        1 => OptimizerConfig::Sophia(SophiaConfig {
            grad_clip_norm: Some(clip),
            k: 3,
            ..SophiaConfig::with_estimator(EstimatorKind::Hutchinson)
        }),
        2 => match OptimizerConfig::baseline(BaselineKind::Adamw) {
            OptimizerConfig::Baseline { kind, mut hyper } => {
                hyper.grad_clip_norm = Some(clip);
                OptimizerConfig::Baseline { kind, hyper }
            }
            other => other,
        },
        _ => OptimizerConfig::baseline(BaselineKind::Lion),
    }
}

fn small_config(which: u8, clip: f64, seed: u64, steps: u64) -> ExperimentConfig {
    let problem = ProblemSpec::Classifier {
        classes: 3,
        d_in: 4,
        hidden: 6,
        examples: 64,
        seed: 1,
    };
    let mut cfg = ExperimentConfig::new(problem, optimizer(which, clip), LrSchedule::new(5e-3, 5, steps));
    cfg.batch_size = 16;
    cfg.estimator_batch_size = 8;
    cfg.eval_interval = 4;
    cfg.seed = seed;
    cfg
}

proptest! {
    #![proptest_config(Config::with_cases(12))]

    #[test]
    fn telemetry_is_consistent(which in 0u8..4, clip in 0.05f64..2.0, seed in any::<u64>(), steps in 8u64..30) {
        let cfg = small_config(which, clip, seed, steps);
        let record = run_experiment(&cfg).unwrap();
        prop_assert_eq!(record.status, RunStatus::Completed);
        prop_assert_eq!(record.rows.len() as u64, steps);
        for (i, r) in record.rows.iter().enumerate() {
            prop_assert_eq!(r.step, i as u64 + 1);
            prop_assert!((0.0..=1.0).contains(&r.unclipped_frac));
            if let Some(c) = cfg.optimizer.grad_clip_norm() {
                prop_assert!(r.grad_norm <= c * (1.0 + 1e-12), "grad norm {} over {}", r.grad_norm, c);
            }
            prop_assert!(r.loss.is_finite() && r.eval_loss.is_finite());
        }
    }

    #[test]
    fn runs_are_byte_reproducible_and_csv_round_trips(which in 0u8..4, seed in any::<u64>()) {
        let cfg = small_config(which, 1.0, seed, 12);
        let a = to_csv(&run_experiment(&cfg).unwrap());
        let b = to_csv(&run_experiment(&cfg).unwrap());
        prop_assert_eq!(&a, &b);
        let rows = parse_csv(&a).unwrap();
        prop_assert_eq!(rows, run_experiment(&cfg).unwrap().rows);
    }
}

proptest! {
    #![proptest_config(Config::with_cases(256))]

    #[test]
    fn cosine_schedule_shape(peak in 1e-5f64..1.0, warmup in 0u64..100, extra in 1u64..1000, frac in 0.01f64..1.0) {
        let total = warmup + extra;
        let s = LrSchedule { peak_lr: peak, warmup, total, final_frac: frac };
        s.validate().unwrap();
        let mut prev = 0.0;
        for t in 1..=total {
            let lr = cosine_lr(t, &s).unwrap();
            prop_assert!(lr > 0.0 && lr <= peak * (1.0 + 1e-12));
            if t <= warmup {
                prop_assert!(lr >= prev);
            } else if t > warmup + 1 {
                prop_assert!(lr <= prev * (1.0 + 1e-12));
            }
            prev = lr;
        }
        prop_assert!((cosine_lr(total, &s).unwrap() - frac * peak).abs() <= 1e-12 * peak);
        prop_assert!(cosine_lr(0, &s).is_err() && cosine_lr(total + 1, &s).is_err());
    }

    #[test]
    fn global_norm_clip(g in prop::collection::vec(-10.0f64..10.0, 1..20), threshold in 1e-3f64..10.0) {
        let g = Tensor::from_vec(g);
        let (out, clipped) = grad_clip_global_norm(&g, threshold);
        prop_assert!(out.norm_l2() <= threshold * (1.0 + 1e-12) || !clipped);
        prop_assert_eq!(clipped, g.norm_l2() > threshold);
        if !clipped {
            prop_assert_eq!(out, g);
        } else {
            let cos = out.dot(&g) / (out.norm_l2() * g.norm_l2());
            prop_assert!((cos - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tune_search_ends_in_band_or_fails(gamma0 in 1e-4f64..10.0, slope in 0.01f64..100.0) {
        // fraction rises with γ and saturates at 1
        match tune_gamma_with(gamma0, |g| Ok((slope * g).min(1.0))) {
            Ok(r) => {
                prop_assert!((0.1..=0.5).contains(&r.unclipped_frac));
                prop_assert_eq!(tune_decision(r.unclipped_frac), TuneDecision::Accept);
                prop_assert_eq!(r.history.len(), r.restarts + 1);
            }
            Err(e) => prop_assert!(matches!(e, Error::Tuning(_)), "unexpected {e:?}"),
        }
    }

    #[test]
    fn quadratic_condition_number_is_exact(d in 2usize..30, log_kappa in 0.0f64..8.0, rotated in any::<bool>(), seed in 0u64..100) {
        let kappa = 10f64.powf(log_kappa);
        let q = make_quadratic(d, kappa, rotated, seed).unwrap();
        prop_assert_eq!(q.mu(), 1.0);
        prop_assert!((q.condition_number() / kappa - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn toy_gradient_at_origin() {
    let (_, g) = value_and_grad(toy2d_loss, &Tensor::from_vec(vec![0.0, 0.0])).unwrap();
    assert_eq!(g.data(), &[0.0, -4.0]);
}

#[test]
fn tiny_lm_parameter_budget() {
    let cfg = TinyLmConfig::new(256, 16, 16, 0);
    assert!(cfg.param_count() <= 100_000);
    assert!(ProblemSpec::TinyLm(cfg).build().is_ok());
    assert!(matches!(
        ProblemSpec::TinyLm(TinyLmConfig::new(256, 16, 128, 0)).build(),
        Err(Error::TooLarge { .. })
    ));
}

#[test]
fn divergent_run_is_marked_and_truncated() {
    let problem = ProblemSpec::Quadratic {
        dim: 4,
        kappa: 1e4,
        rotated: false,
        seed: 0,
    };
    let mut opt = OptimizerConfig::baseline(BaselineKind::Gd);
    if let OptimizerConfig::Baseline { hyper, .. } = &mut opt {
        hyper.grad_clip_norm = None;
    }
    let cfg = ExperimentConfig::new(problem, opt, LrSchedule::new(1.0, 1, 200));
    let record = run_experiment(&cfg).unwrap();
    assert_eq!(record.status, RunStatus::Diverged);
    assert!(record.rows.len() < 200);
}
