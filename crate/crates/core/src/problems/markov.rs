use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::rng::{categorical, Rng};

/// First-order Markov source over `vocab` tokens.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    vocab: usize,
    transition: Vec<f64>,
    stationary: Vec<f64>,
}

impl MarkovChain {
    /// Rows drawn from a symmetric Dirichlet; small `concentration` gives
    /// peaked, low-entropy transitions.
    pub fn random(vocab: usize, concentration: f64, rng: &mut Rng) -> Result<Self> {
        Self::random_zipf(vocab, concentration, 0.0, rng)
    }

    /// Rows drawn from a Dirichlet whose mean is Zipf with exponent `zipf`
    /// (`w_j ∝ (j+1)^−zipf`) and whose per-token concentration averages
    /// `concentration`. `zipf = 0` is the symmetric case.
    pub fn random_zipf(vocab: usize, concentration: f64, zipf: f64, rng: &mut Rng) -> Result<Self> {
        if vocab < 2 || !(concentration > 0.0) || !(zipf >= 0.0) {
            return Err(Error::Parameter(
                "markov source needs vocab ≥ 2, positive concentration and zipf ≥ 0".into(),
            ));
        }
        let weights: Vec<f64> = (0..vocab).map(|j| ((j + 1) as f64).powf(-zipf)).collect();
        let norm: f64 = weights.iter().sum();
        let gammas = weights
            .iter()
            .map(|w| Gamma::new(concentration * vocab as f64 * w / norm, 1.0))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parameter(format!("dirichlet concentration: {e}")))?;
        let mut transition = Vec::with_capacity(vocab * vocab);
        for _ in 0..vocab {
            let mut row: Vec<f64> = gammas.iter().map(|g| g.sample(rng).max(1e-300)).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            transition.extend(row);
        }
        Self::from_transition(vocab, transition)
    }

    pub fn from_transition(vocab: usize, transition: Vec<f64>) -> Result<Self> {
        if transition.len() != vocab * vocab {
            return Err(Error::Shape("transition matrix must be vocab × vocab".into()));
        }
        for row in transition.chunks(vocab) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter("transition rows must be distributions".into()));
            }
        }
        let stationary = stationary_distribution(vocab, &transition);
        Ok(Self {
            vocab,
            transition,
            stationary,
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, token: usize) -> &[f64] {
        &self.transition[token * self.vocab..(token + 1) * self.vocab]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Entropy rate in nats: `−Σᵢ πᵢ Σⱼ Pᵢⱼ ln Pᵢⱼ`. No next-token predictor
    /// can have lower expected cross-entropy on stationary data.
    pub fn entropy_rate(&self) -> f64 {
        (0..self.vocab)
            .map(|i| {
                let h: f64 = self
                    .row(i)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.ln())
                    .sum();
                self.stationary[i] * h
            })
            .sum()
    }

    /// `n` tokens starting from a stationary draw.
    pub fn sample_stream(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        let mut tok = categorical(&self.stationary, rng);
        out.push(tok);
        for _ in 1..n {
            tok = categorical(self.row(tok), rng);
            out.push(tok);
        }
        out
    }
}

fn stationary_distribution(vocab: usize, transition: &[f64]) -> Vec<f64> {
    let mut pi = vec![1.0 / vocab as f64; vocab];
    for _ in 0..10_000 {
        let mut next = vec![0.0; vocab];
        for (i, &pi_i) in pi.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += pi_i * transition[i * vocab + j];
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|p| p / total).collect()
}
