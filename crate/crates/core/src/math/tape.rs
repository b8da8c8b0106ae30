//! Reverse-mode differentiation over a linear tape of recorded operations.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation pushes a node
//! holding its output value; [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients for every node that feeds the root.

use crate::error::{Result, SpaceError};
use crate::math::matrix::{gelu, gelu_grad, layer_norm_rows, Matrix, PROB_EPSILON};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    MaskedSoftmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix,
        scale: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Constant or parameter input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_bt(self.value(b))?;
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Broadcast-add a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = self.value(a).add_row(self.value(bias))?;
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let ln = layer_norm_rows(self.value(x), self.value(gamma), self.value(beta))?;
        Ok(self.push(
            ln.output,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized: ln.normalized,
                inv_std: ln.inv_std,
            },
        ))
    }

    /// Row softmax of `x + additive`; the additive term is treated as a constant.
    pub fn masked_softmax(&mut self, x: Var, additive: &Matrix) -> Result<Var> {
        let out = self.value(x).masked_softmax_rows(additive)?;
        Ok(self.push(out, Op::MaskedSoftmax(x)))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = self.value(table).gather_rows(ids)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_cols(start, len)?;
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Matrix::concat_cols(&values)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// `scale · Σ_r −ln softmax(logits_r)[target_r]` over rows that carry a target.
    /// Produces a `1 × 1` node.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        scale: f64,
    ) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.rows() {
            return Err(SpaceError::shape(
                "softmax_cross_entropy",
                format!("{} targets for {} rows", targets.len(), lv.rows()),
            ));
        }
        let probs = lv.softmax_rows();
        let mut total = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= probs.cols() {
                    return Err(SpaceError::Index {
                        index: t,
                        len: probs.cols(),
                    });
                }
                total += -probs.get(r, t).max(PROB_EPSILON).ln();
            }
        }
        let out = Matrix::filled(1, 1, total * scale);
        Ok(self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                scale,
            },
        ))
    }

    /// Reverse pass from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            return Err(SpaceError::shape(
                "backward",
                format!("root must be scalar, got {:?}", self.value(root).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_bt(self.value(*b))?;
                    let db = self.value(*a).matmul_at(&g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MatMulBt(a, b) => {
                    // C = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                    let da = g.matmul(self.value(*b))?;
                    let db = g.matmul_at(self.value(*a))?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                Op::AddRow(a, bias) => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, g)?;
                    accumulate(&mut grads, *bias, db)?;
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, *a, g.scale(*s))?;
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut dx = g;
                    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                        *d *= gelu_grad(xv);
                    }
                    accumulate(&mut grads, *a, dx)?;
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let d = g.cols();
                    let mut dgamma = Matrix::zeros(1, d);
                    let mut dbeta = Matrix::zeros(1, d);
                    let mut dx = Matrix::zeros(g.rows(), d);
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let nr = normalized.row(r);
                        let mut sum_dn = 0.0;
                        let mut sum_dn_n = 0.0;
                        let mut dn = vec![0.0; d];
                        for c in 0..d {
                            dgamma.data_mut()[c] += gr[c] * nr[c];
                            dbeta.data_mut()[c] += gr[c];
                            dn[c] = gr[c] * gv.data()[c];
                            sum_dn += dn[c];
                            sum_dn_n += dn[c] * nr[c];
                        }
                        let inv_d = 1.0 / d as f64;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std[r] * (dn[c] - inv_d * sum_dn - nr[c] * inv_d * sum_dn_n);
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                    accumulate(&mut grads, *gamma, dgamma)?;
                    accumulate(&mut grads, *beta, dbeta)?;
                }
                Op::MaskedSoftmax(x) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let mut dt = Matrix::zeros(tv.rows(), tv.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, v) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *table, dt)?;
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let dp = g.slice_cols(offset, w)?;
                        offset += w;
                        accumulate(&mut grads, p, dp)?;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                    scale,
                } => {
                    let upstream = g.get(0, 0) * scale;
                    let mut dl = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        // Clamped targets contribute a constant, hence zero gradient.
                        if probs.get(r, t) < PROB_EPSILON {
                            continue;
                        }
                        for (c, o) in dl.row_mut(r).iter_mut().enumerate() {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            *o = upstream * (probs.get(r, c) - onehot);
                        }
                    }
                    accumulate(&mut grads, *logits, dl)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
