use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use sophia_lab::exec::Exec;
use sophia_lab::harness::validate::{run_suite, Suite};
use sophia_lab::harness::{
    compare, emit_csv, emit_plot, read_csv, run_experiment, tune_gamma, ExperimentConfig,
    ExperimentGrid, RunRecord, RunStatus, Series,
};
use sophia_lab::optim::OptimizerConfig;

/// Batch driver for sophia-lab experiments.
#[derive(Parser)]
#[command(name = "sophia-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its metrics CSV into `--out`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search γ so the unclipped fraction lands in [0.1, 0.5].
    TuneGamma {
        #[arg(long)]
        config: PathBuf,
        /// Steps per probe run; defaults to a tenth of `train.steps`, at least k.
        #[arg(long)]
        probe_steps: Option<u64>,
    },
    /// Run a built-in self-check suite.
    Validate {
        #[arg(long, value_parser = ["autodiff", "estimators", "theory", "toy2d"])]
        suite: String,
    },
    /// Speed comparison: grid-best slow optimizer against one fast config.
    Compare {
        /// Config with a `[grid] peak_lr = [...]` sweep.
        #[arg(long)]
        slow: PathBuf,
        #[arg(long)]
        fast: PathBuf,
        /// Target eval loss; defaults to the best final eval loss of the grid.
        #[arg(long)]
        target: Option<f64>,
        /// Also write every run's CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot eval-loss curves from CSV files into one SVG.
    Plot {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn status(record: &RunRecord) -> &'static str {
    match record.status {
        RunStatus::Completed => "completed",
        RunStatus::Diverged => "diverged",
    }
}

fn run(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_toml(&read(config)?)?;
    let record = run_experiment(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv = out.join(format!("{}.csv", stem(config)));
    emit_csv(&record, &csv)?;
    println!(
        "{}",
        json!({
            "csv": csv.display().to_string(),
            "optimizer": cfg.optimizer.name(),
            "status": status(&record),
            "steps": record.rows.len(),
            "final_eval_loss": record.final_eval_loss(),
        })
    );
    Ok(())
}

fn tune(config: &Path, probe_steps: Option<u64>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_toml(&read(config)?)?;
    let k = match &cfg.optimizer {
        OptimizerConfig::Sophia(s) => s.k,
        _ => bail!(sophia_lab::Error::Config("gamma tuning needs a sophia optimizer".into())),
    };
    let steps = probe_steps.unwrap_or((cfg.schedule.total / 10).max(k));
    let problem = cfg.problem.build()?;
    let result = tune_gamma(problem.as_ref(), &cfg, steps)?;
    println!(
        "{}",
        json!({
            "gamma": result.gamma,
            "unclipped_frac": result.unclipped_frac,
            "restarts": result.restarts,
            "history": result.history,
        })
    );
    Ok(())
}

fn validate(suite: &str) -> anyhow::Result<bool> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite)?;
    print!("{report}");
    Ok(report.passed())
}

fn compare_cmd(slow: &Path, fast: &Path, target: Option<f64>, out: Option<&Path>) -> anyhow::Result<()> {
    let grid = ExperimentGrid::from_toml(&read(slow)?)?;
    let fast_cfg = ExperimentConfig::from_toml(&read(fast)?)?;
    let c = compare(&grid, &fast_cfg, target, Exec::default())?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for p in &c.slow {
            emit_csv(&p.record, &dir.join(format!("{}_lr{:e}.csv", stem(slow), p.peak_lr)))?;
        }
        emit_csv(&c.fast, &dir.join(format!("{}.csv", stem(fast))))?;
    }
    let grid_json: Vec<_> = c
        .slow
        .iter()
        .map(|p| {
            json!({
                "peak_lr": p.peak_lr,
                "status": status(&p.record),
                "final_eval_loss": p.record.final_eval_loss(),
            })
        })
        .collect();
    println!(
        "{}",
        json!({
            "grid": grid_json,
            "best_peak_lr": c.slow[c.best].peak_lr,
            "largest_stable_lr": c.largest_stable_lr,
            "target": c.target,
            "slow_steps": c.slow_steps,
            "fast_steps": c.fast_steps,
            "fast_status": status(&c.fast),
            "speedup": c.speedup,
        })
    );
    Ok(())
}

fn plot(inputs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let loaded = inputs
        .iter()
        .map(|p| Ok((stem(p), read_csv(p)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let series: Vec<Series> = loaded
        .iter()
        .map(|(label, rows)| Series { label, rows })
        .collect();
    emit_plot(&series, out)?;
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.render().to_string().trim_end().to_owned()),
    };
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out).map(|_| true),
        Command::TuneGamma {
            config,
            probe_steps,
        } => tune(config, *probe_steps).map(|_| true),
        Command::Validate { suite } => validate(suite),
        Command::Compare {
            slow,
            fast,
            target,
            out,
        } => compare_cmd(slow, fast, *target, out.as_deref()).map(|_| true),
        Command::Plot { inputs, out } => plot(inputs, out).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => fail("validation", "one or more checks failed".into()),
        Err(e) => {
            let kind = match e.downcast_ref::<sophia_lab::Error>() {
                Some(err) => err.kind(),
                None if e.downcast_ref::<std::io::Error>().is_some() => "io",
                None => "cli",
            };
            fail(kind, format!("{e:#}"))
        }
    }
}
