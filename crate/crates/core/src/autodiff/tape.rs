use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Param,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Relu(Var),
    Powf(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
    },
    Sum(Var),
    Mean(Var),
    Gather {
        table: Var,
        indices: Arc<[usize]>,
    },
    ScatterAdd {
        src: Var,
        indices: Arc<[usize]>,
    },
    Softmax(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
    },
    Slice {
        src: Var,
        offset: usize,
    },
    Pad {
        src: Var,
        offset: usize,
    },
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Neg(_) => "neg",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Powf(..) => "powf",
            Op::MatMul { .. } => "matmul",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
            Op::Softmax(_) => "softmax",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Slice { .. } => "slice",
            Op::Pad { .. } => "pad",
        }
    }

    pub(crate) fn parents(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Param | Op::Constant => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(a), Some(b)],
            Op::MatMul { a, b, .. } => [Some(a), Some(b)],
            Op::Scale(x, _)
            | Op::Neg(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Powf(x, _)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::Softmax(x) => [Some(x), None],
            Op::Gather { table, .. } => [Some(table), None],
            Op::ScatterAdd { src, .. } => [Some(src), None],
            Op::SoftmaxCrossEntropy { logits, .. } => [Some(logits), None],
            Op::Slice { src, .. } | Op::Pad { src, .. } => [Some(src), None],
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
}

/// Append-only record of a computation.
///
/// Every recorded primitive has a vector-Jacobian rule that is itself written
/// in terms of recorded primitives, so gradients taken with [`Tape::grad`] can
/// be differentiated again. Shapes must match exactly apart from scalar
/// broadcasting; violations are programming errors and panic.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that gradients can be taken with respect to.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Param, value)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// First node (from `from` onwards) holding a non-finite value.
    pub fn check_finite(&self, from: usize) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate().skip(from) {
            if !node.value.is_finite() {
                return Err(Error::NonFinite {
                    primitive: node.op.name(),
                    node: i,
                });
            }
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let value = self
            .value(a)
            .zip_map(self.value(b), f)
            .unwrap_or_else(|e| panic!("{}: {e}", op.name()));
        self.push(op, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.push(Op::Scale(x, c), value)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| -v);
        self.push(Op::Neg(x), value)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), value)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::ln);
        self.push(Op::Log(x), value)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), value)
    }

    /// Rectifier; its second derivative is taken to be zero everywhere,
    /// including at the kink.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    /// Elementwise `x^p` for a constant exponent.
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        let value = self.value(x).map(|v| pow(v, p));
        self.push(Op::Powf(x, p), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) · op(b)` with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Var {
        let value = self
            .value(a)
            .matmul(self.value(b), trans_a, trans_b)
            .unwrap_or_else(|e| panic!("matmul: {e}"));
        self.push(
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
            },
            value,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), value)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(Op::Mean(x), value)
    }

    /// Row lookup: `out[i, :] = table[indices[i], :]`.
    pub fn gather(&mut self, table: Var, indices: impl Into<Arc<[usize]>>) -> Var {
        let indices = indices.into();
        let t = self.value(table);
        let (rows, cols) = t.dims2().unwrap_or_else(|e| panic!("gather: {e}"));
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &r in indices.iter() {
            assert!(r < rows, "gather: index {r} out of {rows} rows");
            data.extend_from_slice(&t.data()[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::new(vec![indices.len(), cols], data).expect("gather shape");
        self.push(Op::Gather { table, indices }, value)
    }

    /// Adjoint of [`Tape::gather`]: accumulates rows of `src` into a
    /// `rows`-row table at the given indices.
    pub fn scatter_add(&mut self, src: Var, indices: impl Into<Arc<[usize]>>, rows: usize) -> Var {
        let indices = indices.into();
        let s = self.value(src);
        let (n, cols) = s.dims2().unwrap_or_else(|e| panic!("scatter_add: {e}"));
        assert_eq!(n, indices.len(), "scatter_add: one index per source row");
        let mut data = vec![0.0; rows * cols];
        for (i, &r) in indices.iter().enumerate() {
            assert!(r < rows, "scatter_add: index {r} out of {rows} rows");
            let dst = &mut data[r * cols..(r + 1) * cols];
            for (d, v) in dst.iter_mut().zip(&s.data()[i * cols..(i + 1) * cols]) {
                *d += v;
            }
        }
        let value = Tensor::new(vec![rows, cols], data).expect("scatter shape");
        self.push(Op::ScatterAdd { src, indices }, value)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x)).unwrap_or_else(|e| panic!("softmax: {e}"));
        self.push(Op::Softmax(x), value)
    }

    /// Mean over rows of `logsumexp(z_b) - z_b[y_b]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: impl Into<Arc<[usize]>>) -> Var {
        let labels = labels.into();
        let z = self.value(logits);
        let (b, v) = z
            .dims2()
            .unwrap_or_else(|e| panic!("softmax_cross_entropy: {e}"));
        assert_eq!(b, labels.len(), "softmax_cross_entropy: one label per row");
        let mut total = 0.0;
        for (row, &y) in z.data().chunks(v).zip(labels.iter()) {
            assert!(y < v, "softmax_cross_entropy: label {y} out of {v} classes");
            total += log_sum_exp(row) - row[y];
        }
        let value = Tensor::scalar(total / b as f64);
        self.push(Op::SoftmaxCrossEntropy { logits, labels }, value)
    }

    /// Contiguous window of `src`'s data starting at `offset`, viewed with
    /// `shape`. With `offset == 0` and a full-length shape this is a reshape.
    pub fn slice(&mut self, src: Var, offset: usize, shape: &[usize]) -> Var {
        let numel: usize = shape.iter().product();
        let s = self.value(src);
        assert!(
            offset + numel <= s.len(),
            "slice: [{offset}, {}) out of {} elements",
            offset + numel,
            s.len()
        );
        let value = Tensor::new(shape.to_vec(), s.data()[offset..offset + numel].to_vec())
            .unwrap_or_else(|e| panic!("slice: {e}"));
        self.push(Op::Slice { src, offset }, value)
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.value(src).len(),
            "reshape must preserve the element count"
        );
        self.slice(src, 0, shape)
    }

    /// Adjoint of [`Tape::slice`]: zeros of `shape` with `src` written at `offset`.
    pub fn pad(&mut self, src: Var, offset: usize, shape: &[usize]) -> Var {
        let mut value = Tensor::zeros(shape);
        let s = self.value(src);
        assert!(
            offset + s.len() <= value.len(),
            "pad: source does not fit at offset {offset}"
        );
        value.data_mut()[offset..offset + s.len()].copy_from_slice(s.data());
        self.push(Op::Pad { src, offset }, value)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let s = self.scalar(c);
        self.add(x, s)
    }

    /// `sum(a ⊙ b)`.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.sum(p)
    }

    /// Adds a length-`n` bias row to every row of an `[m, n]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let (m, n) = self
            .value(x)
            .dims2()
            .unwrap_or_else(|e| panic!("add_row_bias: {e}"));
        let ones = self.constant(Tensor::ones(&[m, 1]));
        let bias_row = self.reshape(bias, &[1, n]);
        let spread = self.matmul(ones, bias_row);
        self.add(x, spread)
    }
}

pub(crate) fn pow(v: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        v.powi(p as i32)
    } else {
        v.powf(p)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax of a matrix value.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (_, v) = z.dims2()?;
    let mut out = Vec::with_capacity(z.len());
    for row in z.data().chunks(v) {
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|x| (x - lse).exp()));
    }
    Tensor::new(z.shape().to_vec(), out)
}
