//! Second-order clipped stochastic optimization, from the tape up.
//!
//! * [`autodiff`]: reverse-mode differentiation with recorded backward passes,
//!   giving exact gradients and Hessian-vector products.
//! * [`estimators`]: Hutchinson and Gauss-Newton-Bartlett diagonal curvature
//!   estimators, plus brute-force oracles.
//! * [`optim`]: the clipped preconditioned update and the baseline optimizers.
//! * [`problems`]: loss landscapes, from a 2-D toy to a tiny language model.
//! * [`theory`]: eigenspace-clipped Newton and the convex runtime bounds.
//! * [`harness`]: schedules, the training loop, gamma tuning, speedup
//!   measurement and CSV/SVG output.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod harness;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::Tensor;
