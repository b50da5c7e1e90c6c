use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Linear warmup to `peak_lr`, then cosine decay to `final_frac · peak_lr`
/// at the last step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup: u64,
    pub total: u64,
    pub final_frac: f64,
}

impl LrSchedule {
    pub fn new(peak_lr: f64, warmup: u64, total: u64) -> Self {
        Self {
            peak_lr,
            warmup,
            total,
            final_frac: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::Config(format!("peak lr {} must be positive", self.peak_lr)));
        }
        if self.total == 0 {
            return Err(Error::Config("total steps must be positive".into()));
        }
        if self.warmup >= self.total {
            return Err(Error::Config(format!(
                "warmup ({}) must be shorter than the run ({})",
                self.warmup, self.total
            )));
        }
        if !(self.final_frac > 0.0 && self.final_frac <= 1.0) {
            return Err(Error::Config(format!(
                "final lr fraction {} must lie in (0, 1]",
                self.final_frac
            )));
        }
        Ok(())
    }
}

pub fn cosine_lr(t: u64, s: &LrSchedule) -> Result<f64> {
    if t == 0 || t > s.total {
        return Err(Error::Parameter(format!(
            "step {t} outside the schedule 1..={}",
            s.total
        )));
    }
    if t <= s.warmup {
        return Ok(s.peak_lr * t as f64 / s.warmup as f64);
    }
    let p = (t - s.warmup) as f64 / (s.total - s.warmup) as f64;
    let floor = s.final_frac * s.peak_lr;
    Ok(floor + (s.peak_lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}

/// Rescales `g` to norm `threshold` when it is longer; reports whether it did.
pub fn grad_clip_global_norm(g: &Tensor, threshold: f64) -> (Tensor, bool) {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = g.norm_l2();
    if norm > threshold {
        (g.scale(threshold / norm), true)
    } else {
        (g.clone(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_landmarks() {
        let s = LrSchedule::new(0.2, 10, 110);
        assert_eq!(cosine_lr(10, &s).unwrap(), 0.2);
        assert!((cosine_lr(110, &s).unwrap() - 0.01).abs() < 1e-15);
        let mid = cosine_lr(60, &s).unwrap();
        assert!((mid - (0.2 + 0.01) / 2.0).abs() < 1e-15);
        assert!((cosine_lr(1, &s).unwrap() - 0.02).abs() < 1e-15);
        assert!(cosine_lr(0, &s).is_err());
        assert!(cosine_lr(111, &s).is_err());
    }

    #[test]
    fn no_warmup() {
        let s = LrSchedule::new(1.0, 0, 5);
        assert!(cosine_lr(1, &s).unwrap() < 1.0);
        assert!((cosine_lr(5, &s).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn clipping() {
        let (g, hit) = grad_clip_global_norm(&Tensor::from_vec(vec![0.0, 2.0]), 1.0);
        assert!(hit);
        assert_eq!(g.data(), &[0.0, 1.0]);
        let (g, hit) = grad_clip_global_norm(&Tensor::from_vec(vec![0.3, 0.4]), 1.0);
        assert!(!hit);
        assert_eq!(g.data(), &[0.3, 0.4]);
    }
}
