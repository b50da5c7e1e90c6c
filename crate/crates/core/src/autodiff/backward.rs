use crate::tensor::Tensor;

use super::tape::{Op, Tape, Var};

impl Tape {
    /// Reverse pass from the scalar `output`, recorded onto this tape.
    ///
    /// Returns one gradient node per entry of `wrt`. Because the pass is made
    /// of ordinary recorded primitives, the returned nodes can themselves be
    /// differentiated. Entries of `wrt` that `output` does not depend on get a
    /// zero constant.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(
            self.value(output).len(),
            1,
            "grad: output must be a single scalar"
        );
        let end = output.0 + 1;
        let mut reach = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                reach[w.0] = true;
            }
        }
        for i in 0..end {
            if reach[i] {
                continue;
            }
            reach[i] = self.nodes[i]
                .op
                .parents()
                .iter()
                .flatten()
                .any(|p| reach[p.0]);
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        if reach[output.0] {
            let seed = self.constant(Tensor::ones(self.shape(output)));
            grads[output.0] = Some(seed);
        }
        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !reach[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (parent, contribution) in self.vjp(Var(i), &op, g, &reach) {
                grads[parent.0] = Some(match grads[parent.0] {
                    Some(acc) => self.add(acc, contribution),
                    None => contribution,
                });
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros_like(self.value(w));
                    self.constant(zeros)
                }
            })
            .collect()
    }

    /// Sums a broadcast gradient back down to a scalar operand.
    fn reduce_to(&mut self, g: Var, target: Var) -> Var {
        if self.value(target).is_scalar() && !self.value(g).is_scalar() {
            self.sum(g)
        } else {
            g
        }
    }

    fn vjp(&mut self, out: Var, op: &Op, g: Var, reach: &[bool]) -> Vec<(Var, Var)> {
        let wants = |v: Var| reach[v.0];
        let mut contributions = Vec::with_capacity(2);
        match *op {
            Op::Param | Op::Constant => {}
            Op::Add(a, b) => {
                if wants(a) {
                    contributions.push((a, self.reduce_to(g, a)));
                }
                if wants(b) {
                    contributions.push((b, self.reduce_to(g, b)));
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    contributions.push((a, self.reduce_to(g, a)));
                }
                if wants(b) {
                    let ng = self.neg(g);
                    contributions.push((b, self.reduce_to(ng, b)));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let ga = self.mul(g, b);
                    contributions.push((a, self.reduce_to(ga, a)));
                }
                if wants(b) {
                    let gb = self.mul(g, a);
                    contributions.push((b, self.reduce_to(gb, b)));
                }
            }
            Op::Div(a, b) => {
                if wants(a) {
                    let ga = self.div(g, b);
                    contributions.push((a, self.reduce_to(ga, a)));
                }
                if wants(b) {
                    // d(a/b)/db = -(a/b)/b
                    let go = self.mul(g, out);
                    let q = self.div(go, b);
                    let gb = self.neg(q);
                    contributions.push((b, self.reduce_to(gb, b)));
                }
            }
            Op::Scale(x, c) => {
                contributions.push((x, self.scale(g, c)));
            }
            Op::Neg(x) => {
                contributions.push((x, self.neg(g)));
            }
            Op::Exp(x) => {
                contributions.push((x, self.mul(g, out)));
            }
            Op::Log(x) => {
                contributions.push((x, self.div(g, x)));
            }
            Op::Tanh(x) => {
                let sq = self.mul(out, out);
                let one = self.scalar(1.0);
                let d = self.sub(one, sq);
                contributions.push((x, self.mul(g, d)));
            }
            Op::Relu(x) => {
                let mask = self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                contributions.push((x, self.mul(g, mask)));
            }
            Op::Powf(x, p) => {
                if p == 1.0 {
                    contributions.push((x, g));
                } else if p != 0.0 {
                    let lower = self.powf(x, p - 1.0);
                    let d = self.scale(lower, p);
                    contributions.push((x, self.mul(g, d)));
                }
            }
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
            } => {
                // out = A'B' with A' = op(A), B' = op(B).
                if wants(a) {
                    let ga = if trans_a {
                        self.matmul_t(b, g, trans_b, true)
                    } else {
                        self.matmul_t(g, b, false, !trans_b)
                    };
                    contributions.push((a, ga));
                }
                if wants(b) {
                    let gb = if trans_b {
                        self.matmul_t(g, a, true, trans_a)
                    } else {
                        self.matmul_t(a, g, !trans_a, false)
                    };
                    contributions.push((b, gb));
                }
            }
            Op::Sum(x) => {
                let ones = self.constant(Tensor::ones(self.shape(x)));
                contributions.push((x, self.mul(g, ones)));
            }
            Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                let ones = self.constant(Tensor::ones(self.shape(x)));
                let gs = self.scale(g, 1.0 / n);
                contributions.push((x, self.mul(gs, ones)));
            }
            Op::Gather { table, ref indices } => {
                let rows = self.shape(table)[0];
                contributions.push((table, self.scatter_add(g, indices.clone(), rows)));
            }
            Op::ScatterAdd {
                src, ref indices, ..
            } => {
                contributions.push((src, self.gather(g, indices.clone())));
            }
            Op::Softmax(x) => {
                let dx = self.softmax_vjp(out, g);
                contributions.push((x, dx));
            }
            Op::SoftmaxCrossEntropy { logits, ref labels } => {
                let (b, v) = self.value(logits).dims2().expect("logits are a matrix");
                let p = self.softmax(logits);
                let mut onehot = Tensor::zeros(&[b, v]);
                for (row, &y) in labels.iter().enumerate() {
                    onehot.data_mut()[row * v + y] = 1.0;
                }
                let onehot = self.constant(onehot);
                let diff = self.sub(p, onehot);
                let gs = self.scale(g, 1.0 / b as f64);
                contributions.push((logits, self.mul(gs, diff)));
            }
            Op::Slice { src, offset } => {
                let shape = self.shape(src).to_vec();
                contributions.push((src, self.pad(g, offset, &shape)));
            }
            Op::Pad { src, offset } => {
                let shape = self.shape(src).to_vec();
                contributions.push((src, self.slice(g, offset, &shape)));
            }
        }
        contributions
    }

    /// `p ⊙ g − p ⊙ rowsum(p ⊙ g)`, with the row reduction and broadcast
    /// written as products with ones so the rule stays differentiable.
    fn softmax_vjp(&mut self, p: Var, g: Var) -> Var {
        let (b, v) = self.value(p).dims2().expect("softmax output is a matrix");
        let pg = self.mul(p, g);
        let col = self.constant(Tensor::ones(&[v, 1]));
        let row = self.constant(Tensor::ones(&[1, v]));
        let sums = self.matmul(pg, col);
        let spread = self.matmul(sums, row);
        debug_assert_eq!(self.shape(spread), &[b, v]);
        let correction = self.mul(p, spread);
        self.sub(pg, correction)
    }
}
