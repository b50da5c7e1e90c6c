//! Experiment configuration files.
//!
//! Configs are TOML documents with three sections, written either as tables
//! or as dotted keys (`optimizer.gamma = 0.05`). Unknown keys are rejected,
//! as are keys that do not apply to the selected problem or optimizer.
//!
//! ```toml
//! problem.kind = "tiny_lm"      # toy2d | quadratic | classifier | tiny_lm
//! problem.vocab = 32
//!
//! optimizer.kind = "sophia"     # or gd, signgd, sign_momentum, adamw, lion, normalize
//! optimizer.estimator = "gnb"   # hutchinson | gnb | empirical_fisher
//! optimizer.gamma = 0.05
//!
//! train.steps = 2000
//! train.peak_lr = 3e-3
//! ```
//!
//! Problem keys: `seed` (default 0) plus
//! * quadratic: `dim`, `kappa`, `rotated`
//! * classifier: `classes`, `d_in`, `hidden`, `examples`
//! * tiny_lm: `vocab`, `context`, `embedding`, `hidden`, `concentration`,
//!   `zipf`, `eval_examples`
//!
//! Optimizer keys: `beta1`, `beta2`, `eps`, `weight_decay`,
//! `grad_clip_norm` (0 disables clipping); Sophia also takes `estimator`,
//! `mode` (sophia | adahessian_like | empirical_fisher), `gamma`, `k` and
//! `probes` (Hutchinson probes per estimate).
//!
//! Train keys: `steps`, `warmup` (default 50), `peak_lr`, `final_lr_frac`
//! (default 0.05), `batch_size` (default 64), `estimator_batch_size`
//! (defaults to the batch size), `seed`, `eval_interval` (default 10).
//!
//! The warmup and batch defaults are sized for desk-scale runs, not taken
//! from large-model practice.
//!
//! A `compare --slow` file additionally carries `grid.peak_lr = [...]`.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::optim::{
    default_gamma, BaselineHyper, BaselineKind, OptimizerConfig, PreconditionerMode, SophiaConfig,
};
use crate::problems::{make_classifier, make_quadratic, Problem, TinyLm, TinyLmConfig, Toy2D};

use super::schedule::LrSchedule;

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Toy2d,
    Quadratic {
        dim: usize,
        kappa: f64,
        rotated: bool,
        seed: u64,
    },
    Classifier {
        classes: usize,
        d_in: usize,
        hidden: usize,
        examples: usize,
        seed: u64,
    },
    TinyLm(TinyLmConfig),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemSpec::Toy2d => Box::new(Toy2D),
            ProblemSpec::Quadratic {
                dim,
                kappa,
                rotated,
                seed,
            } => Box::new(make_quadratic(*dim, *kappa, *rotated, *seed)?),
            ProblemSpec::Classifier {
                classes,
                d_in,
                hidden,
                examples,
                seed,
            } => Box::new(make_classifier(*classes, *d_in, *hidden, *examples, *seed)?),
            ProblemSpec::TinyLm(cfg) => Box::new(TinyLm::new(cfg.clone())?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    /// Leading examples of each batch handed to the curvature estimator.
    pub estimator_batch_size: usize,
    /// Hutchinson probes per estimate.
    pub probes: usize,
    pub seed: u64,
    pub eval_interval: u64,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, optimizer: OptimizerConfig, schedule: LrSchedule) -> Self {
        Self {
            problem,
            optimizer,
            schedule,
            batch_size: 64,
            estimator_batch_size: 64,
            probes: 1,
            seed: 0,
            eval_interval: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.optimizer
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.batch_size == 0 || self.estimator_batch_size == 0 || self.probes == 0 {
            return Err(Error::Config(
                "batch sizes and probe count must be positive".into(),
            ));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw = parse_raw(text)?;
        if raw.grid.is_some() {
            return Err(Error::Config(
                "a [grid] section is only accepted by `compare --slow`".into(),
            ));
        }
        raw.into_config()
    }
}

/// A base config swept over peak learning rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub base: ExperimentConfig,
    pub peak_lrs: Vec<f64>,
}

impl ExperimentGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw = parse_raw(text)?;
        let grid = raw.grid.clone();
        let base = raw.into_config()?;
        let peak_lrs = match grid {
            Some(g) => g.peak_lr,
            None => vec![base.schedule.peak_lr],
        };
        if peak_lrs.is_empty() || peak_lrs.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::Config("grid.peak_lr must list positive values".into()));
        }
        Ok(Self { base, peak_lrs })
    }

    pub fn configs(&self) -> Vec<ExperimentConfig> {
        self.peak_lrs
            .iter()
            .map(|&lr| {
                let mut c = self.base.clone();
                c.schedule.peak_lr = lr;
                c
            })
            .collect()
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    problem: RawProblem,
    optimizer: RawOptimizer,
    train: RawTrain,
    grid: Option<RawGrid>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: String,
    seed: Option<u64>,
    dim: Option<usize>,
    kappa: Option<f64>,
    rotated: Option<bool>,
    classes: Option<usize>,
    d_in: Option<usize>,
    hidden: Option<usize>,
    examples: Option<usize>,
    vocab: Option<usize>,
    context: Option<usize>,
    embedding: Option<usize>,
    concentration: Option<f64>,
    zipf: Option<f64>,
    eval_examples: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    kind: String,
    estimator: Option<EstimatorKind>,
    mode: Option<PreconditionerMode>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    gamma: Option<f64>,
    eps: Option<f64>,
    k: Option<u64>,
    weight_decay: Option<f64>,
    grad_clip_norm: Option<f64>,
    probes: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    steps: u64,
    peak_lr: f64,
    warmup: Option<u64>,
    final_lr_frac: Option<f64>,
    batch_size: Option<usize>,
    estimator_batch_size: Option<usize>,
    seed: Option<u64>,
    eval_interval: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    peak_lr: Vec<f64>,
}

fn parse_raw(text: &str) -> Result<RawDoc> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

/// Rejects keys set in a section that the selected kind does not use.
fn forbid(section: &str, kind: &str, present: &[(&str, bool)]) -> Result<()> {
    let stray: Vec<&str> = present.iter().filter(|(_, p)| *p).map(|(k, _)| *k).collect();
    if stray.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{section}.kind = \"{kind}\" does not take {}",
            stray
                .iter()
                .map(|k| format!("{section}.{k}"))
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

fn require<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required key {key}")))
}

impl RawProblem {
    fn into_spec(self) -> Result<ProblemSpec> {
        let seed = self.seed.unwrap_or(0);
        let p = &self;
        let quad = [
            ("dim", p.dim.is_some()),
            ("kappa", p.kappa.is_some()),
            ("rotated", p.rotated.is_some()),
        ];
        let clf = [
            ("classes", p.classes.is_some()),
            ("d_in", p.d_in.is_some()),
            ("examples", p.examples.is_some()),
        ];
        let lm = [
            ("vocab", p.vocab.is_some()),
            ("context", p.context.is_some()),
            ("embedding", p.embedding.is_some()),
            ("concentration", p.concentration.is_some()),
            ("zipf", p.zipf.is_some()),
            ("eval_examples", p.eval_examples.is_some()),
        ];
        let hidden = [("hidden", p.hidden.is_some())];
        let kind = self.kind.as_str();
        match kind {
            "toy2d" => {
                forbid("problem", kind, &[&quad[..], &clf, &lm, &hidden, &[("seed", p.seed.is_some())]].concat())?;
                Ok(ProblemSpec::Toy2d)
            }
            "quadratic" => {
                forbid("problem", kind, &[&clf[..], &lm, &hidden].concat())?;
                Ok(ProblemSpec::Quadratic {
                    dim: require(self.dim, "problem.dim")?,
                    kappa: self.kappa.unwrap_or(1.0),
                    rotated: self.rotated.unwrap_or(false),
                    seed,
                })
            }
            "classifier" => {
                forbid("problem", kind, &[&quad[..], &lm].concat())?;
                Ok(ProblemSpec::Classifier {
                    classes: require(self.classes, "problem.classes")?,
                    d_in: require(self.d_in, "problem.d_in")?,
                    hidden: require(self.hidden, "problem.hidden")?,
                    examples: self.examples.unwrap_or(512),
                    seed,
                })
            }
            "tiny_lm" => {
                forbid("problem", kind, &[&quad[..], &clf].concat())?;
                let mut cfg = TinyLmConfig::new(
                    require(self.vocab, "problem.vocab")?,
                    self.context.unwrap_or(4),
                    self.embedding.unwrap_or(16),
                    seed,
                );
                if let Some(h) = self.hidden {
                    cfg.hidden = h;
                }
                if let Some(c) = self.concentration {
                    cfg.concentration = c;
                }
                if let Some(z) = self.zipf {
                    cfg.zipf = z;
                }
                if let Some(n) = self.eval_examples {
                    cfg.eval_examples = n;
                }
                Ok(ProblemSpec::TinyLm(cfg))
            }
            other => Err(Error::Config(format!(
                "unknown problem.kind \"{other}\" (expected toy2d, quadratic, classifier or tiny_lm)"
            ))),
        }
    }
}

fn clip_norm(v: Option<f64>) -> Option<f64> {
    match v {
        None => Some(1.0),
        Some(0.0) => None,
        Some(c) => Some(c),
    }
}

impl RawOptimizer {
    fn into_config(self) -> Result<(OptimizerConfig, usize)> {
        let kind = self.kind.as_str();
        if kind == "sophia" {
            let estimator = self.estimator.unwrap_or(EstimatorKind::Gnb);
            let mut c = SophiaConfig::with_estimator(estimator);
            c.beta1 = self.beta1.unwrap_or(c.beta1);
            c.beta2 = self.beta2.unwrap_or(c.beta2);
            c.gamma = self.gamma.unwrap_or(default_gamma(estimator));
            c.eps = self.eps.unwrap_or(c.eps);
            c.k = self.k.unwrap_or(c.k);
            c.weight_decay = self.weight_decay.unwrap_or(c.weight_decay);
            c.grad_clip_norm = clip_norm(self.grad_clip_norm);
            c.mode = self.mode.unwrap_or(c.mode);
            if estimator != EstimatorKind::Hutchinson && self.probes.is_some() {
                return Err(Error::Config(
                    "optimizer.probes only applies to the hutchinson estimator".into(),
                ));
            }
            return Ok((OptimizerConfig::Sophia(c), self.probes.unwrap_or(1)));
        }
        let base = match kind {
            "gd" => BaselineKind::Gd,
            "signgd" => BaselineKind::Signgd,
            "sign_momentum" => BaselineKind::SignMomentum,
            "adamw" => BaselineKind::Adamw,
            "lion" => BaselineKind::Lion,
            "normalize" => BaselineKind::Normalize,
            other => {
                return Err(Error::Config(format!(
                    "unknown optimizer.kind \"{other}\" (expected sophia, gd, signgd, \
                     sign_momentum, adamw, lion or normalize)"
                )))
            }
        };
        forbid(
            "optimizer",
            kind,
            &[
                ("estimator", self.estimator.is_some()),
                ("mode", self.mode.is_some()),
                ("gamma", self.gamma.is_some()),
                ("k", self.k.is_some()),
                ("probes", self.probes.is_some()),
            ],
        )?;
        if !base.uses_momentum() {
            forbid(
                "optimizer",
                kind,
                &[("beta1", self.beta1.is_some()), ("beta2", self.beta2.is_some())],
            )?;
        }
        if base != BaselineKind::Adamw {
            forbid("optimizer", kind, &[("eps", self.eps.is_some())])?;
        }
        let mut hyper = BaselineHyper::defaults(base);
        hyper.beta1 = self.beta1.unwrap_or(hyper.beta1);
        hyper.beta2 = self.beta2.unwrap_or(hyper.beta2);
        hyper.eps = self.eps.unwrap_or(hyper.eps);
        hyper.weight_decay = self.weight_decay.unwrap_or(hyper.weight_decay);
        hyper.grad_clip_norm = clip_norm(self.grad_clip_norm);
        Ok((OptimizerConfig::Baseline { kind: base, hyper }, 1))
    }
}

impl RawDoc {
    fn into_config(self) -> Result<ExperimentConfig> {
        let problem = self.problem.into_spec()?;
        let (optimizer, probes) = self.optimizer.into_config()?;
        let t = self.train;
        let mut schedule = LrSchedule::new(t.peak_lr, t.warmup.unwrap_or(50), t.steps);
        if let Some(f) = t.final_lr_frac {
            schedule.final_frac = f;
        }
        let batch_size = t.batch_size.unwrap_or(64);
        let cfg = ExperimentConfig {
            problem,
            optimizer,
            schedule,
            batch_size,
            estimator_batch_size: t.estimator_batch_size.unwrap_or(batch_size),
            probes,
            seed: t.seed.unwrap_or(0),
            eval_interval: t.eval_interval.unwrap_or(10),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
problem.kind = "quadratic"
problem.dim = 4
problem.kappa = 10.0

optimizer.kind = "sophia"
optimizer.estimator = "hutchinson"
optimizer.gamma = 0.02

train.steps = 100
train.warmup = 10
train.peak_lr = 0.1
"#;

    #[test]
    fn dotted_keys_parse() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(
            c.problem,
            ProblemSpec::Quadratic {
                dim: 4,
                kappa: 10.0,
                rotated: false,
                seed: 0
            }
        );
        match &c.optimizer {
            OptimizerConfig::Sophia(s) => {
                assert_eq!(s.gamma, 0.02);
                assert_eq!(s.estimator, EstimatorKind::Hutchinson);
                assert_eq!(s.grad_clip_norm, Some(1.0));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.schedule.final_frac, 0.05);
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn tables_parse_too() {
        let text = "[problem]\nkind = \"toy2d\"\n[optimizer]\nkind = \"signgd\"\n[train]\nsteps = 10\nwarmup = 0\npeak_lr = 0.01\n";
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.problem, ProblemSpec::Toy2d);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml(&format!("{BASE}optimizer.gama = 0.1\n")).unwrap_err();
        assert_eq!(err.kind(), "config");
        assert!(err.to_string().contains("gama"), "{err}");
        let err = ExperimentConfig::from_toml(&format!("{BASE}problem.vocab = 3\n")).unwrap_err();
        assert!(err.to_string().contains("problem.vocab"), "{err}");
        let text = BASE.replace("optimizer.kind = \"sophia\"", "optimizer.kind = \"adamw\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("optimizer.gamma"), "{err}");
    }

    #[test]
    fn grid_only_for_compare() {
        let text = format!("{BASE}grid.peak_lr = [0.1, 0.2]\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let g = ExperimentGrid::from_toml(&text).unwrap();
        assert_eq!(g.configs().len(), 2);
        assert_eq!(g.configs()[1].schedule.peak_lr, 0.2);
    }

    #[test]
    fn invalid_values_rejected() {
        let text = BASE.replace("train.warmup = 10", "train.warmup = 100");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap_err().kind(), "config");
        let text = format!("{BASE}train.final_lr_frac = 0.0\n");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap_err().kind(), "config");
    }
}
