use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sophia_lab::autodiff::{Tape, Var};
use sophia_lab::estimators::{exact_gn_diag, hutchinson_estimate_with};
use sophia_lab::exec::Exec;
use sophia_lab::harness::{compare::run_grid, ExperimentConfig, ExperimentGrid, LrSchedule, ProblemSpec};
use sophia_lab::optim::{BaselineKind, OptimizerConfig};
use sophia_lab::problems::{make_classifier, make_tiny_lm, Problem};
use sophia_lab::rng::{stream, Purpose};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn hutchinson_probes(c: &mut Criterion) {
    let clf = make_classifier(10, 16, 32, 256, 0).unwrap();
    let batch = clf.full_batch().prefix(64);
    let theta = clf.initial_params();
    let mut group = c.benchmark_group("hutchinson_64_probes");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let f = |t: &mut Tape, p: Var| clf.loss(t, p, &batch);
                hutchinson_estimate_with(f, &theta, &mut stream(0, 0, Purpose::Test), 64, exec).unwrap()
            })
        });
    }
    group.finish();
}

fn gauss_newton_diagonal(c: &mut Criterion) {
    let lm = make_tiny_lm(32, 4, 8, 0).unwrap();
    let batch = lm.eval_batch().prefix(32);
    let theta = lm.initial_params();
    let model = lm.logits_model().unwrap();
    let mut group = c.benchmark_group("exact_gn_diag_tiny_lm");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exact_gn_diag(model, &theta, &batch, exec).unwrap())
        });
    }
    group.finish();
}

fn lr_grid(c: &mut Criterion) {
    let spec = ProblemSpec::Classifier {
        classes: 5,
        d_in: 8,
        hidden: 16,
        examples: 256,
        seed: 0,
    };
    let base = ExperimentConfig::new(
        spec.clone(),
        OptimizerConfig::baseline(BaselineKind::Adamw),
        LrSchedule::new(1e-3, 10, 100),
    );
    let grid = ExperimentGrid {
        base,
        peak_lrs: vec![1e-3, 3e-3, 1e-2, 3e-2],
    };
    let problem = spec.build().unwrap();
    let mut group = c.benchmark_group("adamw_grid_4x100_steps");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_grid(&grid, problem.as_ref(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, hutchinson_probes, gauss_newton_diagonal, lr_grid);
criterion_main!(benches);
