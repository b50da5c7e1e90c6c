//! Experiment plumbing: configs, the training loop, gamma tuning, speed
//! comparisons and output files.

pub mod compare;
pub mod config;
pub mod csv;
pub mod plot;
pub mod run;
pub mod schedule;
pub mod toy;
pub mod tune;
pub mod validate;

pub use compare::{compare, Comparison};
pub use config::{ExperimentConfig, ExperimentGrid, ProblemSpec};
pub use csv::{emit_csv, parse_csv, read_csv, to_csv, HEADER};
pub use plot::{emit_plot, Series};
pub use run::{run_experiment, speedup_ratio, steps_to_target, train, Row, RunRecord, RunStatus, Trained};
pub use schedule::{cosine_lr, grad_clip_global_norm, LrSchedule};
pub use tune::{tune_decision, tune_gamma, tune_gamma_with, TuneDecision, TuneResult};
