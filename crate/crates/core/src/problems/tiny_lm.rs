use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, categorical, Purpose, Rng};
use crate::tensor::Tensor;

use super::{cross_entropy_loss, Batch, Inputs, Layout, LogitsModel, MarkovChain, Problem};

pub const MAX_PARAMS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TinyLmConfig {
    pub vocab: usize,
    pub context: usize,
    pub embedding: usize,
    pub hidden: usize,
    /// Dirichlet concentration of the source's transition rows.
    pub concentration: f64,
    /// Zipf exponent of the mean transition row; 0 is symmetric.
    pub zipf: f64,
    pub eval_examples: usize,
    pub seed: u64,
}

impl TinyLmConfig {
    pub fn new(vocab: usize, context: usize, embedding: usize, seed: u64) -> Self {
        Self {
            vocab,
            context,
            embedding,
            hidden: 64,
            concentration: 1.0,
            zipf: 2.0,
            eval_examples: 512,
            seed,
        }
    }

    pub fn param_count(&self) -> usize {
        let (v, c, e, h) = (self.vocab, self.context, self.embedding, self.hidden);
        v * e + c * e * h + h + h * v + v
    }
}

/// Next-token MLP over a window of embedded tokens:
/// `logits = tanh(concat(E[x]) W1 + b1) W2 + b2`.
///
/// Training windows are drawn fresh from a seeded order-1 Markov source, so
/// the source's entropy rate is a hard floor for the expected loss. By
/// default the transition rows scatter around a Zipf(2) profile, which gives
/// token frequencies, and with them per-coordinate curvatures, spanning
/// about three orders of magnitude.
#[derive(Clone, Debug)]
pub struct TinyLm {
    cfg: TinyLmConfig,
    layout: Layout,
    source: MarkovChain,
    eval: Batch,
}

pub fn make_tiny_lm(vocab: usize, context: usize, embedding: usize, seed: u64) -> Result<TinyLm> {
    TinyLm::new(TinyLmConfig::new(vocab, context, embedding, seed))
}

impl TinyLm {
    pub fn new(cfg: TinyLmConfig) -> Result<Self> {
        if cfg.vocab < 2 || cfg.context == 0 || cfg.embedding == 0 || cfg.hidden == 0 {
            return Err(Error::Parameter(
                "tiny lm needs vocab ≥ 2 and positive sizes".into(),
            ));
        }
        if cfg.eval_examples == 0 {
            return Err(Error::Parameter("eval set must be non-empty".into()));
        }
        let n = cfg.param_count();
        if n > MAX_PARAMS {
            return Err(Error::TooLarge {
                what: "tiny lm parameter count",
                size: n,
                limit: MAX_PARAMS,
            });
        }
        let source = MarkovChain::random_zipf(
            cfg.vocab,
            cfg.concentration,
            cfg.zipf,
            &mut rng::stream(cfg.seed, 0, Purpose::Data),
        )?;
        let (v, c, e, h) = (cfg.vocab, cfg.context, cfg.embedding, cfg.hidden);
        let layout = Layout::new(&[&[v, e], &[c * e, h], &[h], &[h, v], &[v]]);
        let mut lm = Self {
            cfg,
            layout,
            source,
            eval: Batch::Full,
        };
        lm.eval = lm.windows(lm.cfg.eval_examples, &mut rng::stream(lm.cfg.seed, 0, Purpose::Eval));
        Ok(lm)
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.cfg
    }

    pub fn source(&self) -> &MarkovChain {
        &self.source
    }

    /// Entropy rate of the data source in nats per token.
    pub fn source_entropy(&self) -> f64 {
        self.source.entropy_rate()
    }

    /// The seeded token stream the problem is defined over.
    pub fn token_stream(&self, n: usize) -> Vec<usize> {
        self.source
            .sample_stream(n, &mut rng::stream(self.cfg.seed, 1, Purpose::Data))
    }

    /// Mean over eval contexts of the source's next-token entropy: the
    /// lowest value [`Problem::eval_loss`] can take.
    pub fn eval_floor(&self) -> f64 {
        let (ids, c) = self.eval_contexts();
        let n = ids.len() / c;
        (0..n)
            .map(|i| {
                self.source
                    .row(ids[i * c + c - 1])
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64
    }

    fn eval_contexts(&self) -> (Arc<[usize]>, usize) {
        match &self.eval {
            Batch::Classification {
                inputs: Inputs::Tokens { ids, context },
                ..
            } => (ids.clone(), *context),
            _ => unreachable!("eval set is built from token windows"),
        }
    }

    /// `n` independent (context, next token) pairs, each window starting
    /// from the stationary distribution.
    pub fn windows(&self, n: usize, rng: &mut Rng) -> Batch {
        let c = self.cfg.context;
        let mut ids = Vec::with_capacity(n * c);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut tok = categorical(self.source.stationary(), rng);
            for _ in 0..c {
                ids.push(tok);
                tok = categorical(self.source.row(tok), rng);
            }
            labels.push(tok);
        }
        Batch::Classification {
            inputs: Inputs::Tokens {
                ids: ids.into(),
                context: c,
            },
            labels: Arc::from(labels),
        }
    }
}

impl LogitsModel for TinyLm {
    fn num_classes(&self) -> usize {
        self.cfg.vocab
    }

    fn logits(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        let ids = match batch {
            Batch::Classification {
                inputs: Inputs::Tokens { ids, context },
                ..
            } => {
                assert_eq!(*context, self.cfg.context, "context length mismatch");
                ids.clone()
            }
            other => panic!("tiny lm expects token windows, got {other:?}"),
        };
        let b = ids.len() / self.cfg.context;
        let emb = self.layout.view(tape, theta, 0);
        let w1 = self.layout.view(tape, theta, 1);
        let b1 = self.layout.view(tape, theta, 2);
        let w2 = self.layout.view(tape, theta, 3);
        let b2 = self.layout.view(tape, theta, 4);
        let rows = tape.gather(emb, ids);
        let x = tape.reshape(rows, &[b, self.cfg.context * self.cfg.embedding]);
        let pre = tape.matmul(x, w1);
        let pre = tape.add_row_bias(pre, b1);
        let h = tape.tanh(pre);
        let out = tape.matmul(h, w2);
        tape.add_row_bias(out, b2)
    }
}

impl Problem for TinyLm {
    fn name(&self) -> &str {
        "tiny_lm"
    }

    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn initial_params(&self) -> Tensor {
        let mut rng = rng::stream(self.cfg.seed, 1, Purpose::Init);
        let mut theta = vec![0.0; self.dim()];
        let fan_in = (self.cfg.context * self.cfg.embedding) as f64;
        let scales = [
            (0, 1.0),
            (1, 1.0 / fan_in.sqrt()),
            (3, 0.1 / (self.cfg.hidden as f64).sqrt()),
        ];
        for (block, scale) in scales {
            for i in self.layout.range(block) {
                theta[i] = scale * { let z: f64 = StandardNormal.sample(&mut rng); z };
            }
        }
        Tensor::from_vec(theta)
    }

    fn loss(&self, tape: &mut Tape, theta: Var, batch: &Batch) -> Var {
        cross_entropy_loss(self, tape, theta, batch)
    }

    fn sample_batch(&self, rng: &mut Rng, size: usize) -> Batch {
        self.windows(size, rng)
    }

    fn eval_batch(&self) -> Batch {
        self.eval.clone()
    }

    /// Cross-entropy against the source's exact next-token distribution
    /// for each eval context, rather than against one sampled label. Same
    /// expectation, far less variance.
    fn eval_loss(&self, theta: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.param(theta.clone());
        let logits = self.logits(&mut tape, p, &self.eval);
        tape.check_finite(0)?;
        let z = tape.value(logits);
        let v = self.cfg.vocab;
        let (ids, c) = self.eval_contexts();
        let n = ids.len() / c;
        let total: f64 = (0..n)
            .map(|i| {
                let row = &z.data()[i * v..(i + 1) * v];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                let target = self.source.row(ids[i * c + c - 1]);
                target.iter().zip(row).map(|(q, x)| q * (lse - x)).sum::<f64>()
            })
            .sum();
        Ok(total / n as f64)
    }

    fn logits_model(&self) -> Option<&dyn LogitsModel> {
        Some(self)
    }
}
