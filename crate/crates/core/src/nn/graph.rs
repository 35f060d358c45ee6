//! Tape-based reverse-mode differentiation over a fixed set of matrix ops.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and accumulates parameter
//! gradients into the [`ParamStore`] the parameters were read from. Graphs
//! are built per minibatch and dropped afterwards.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::{matmul_a_bt_into, matmul_at_b_into};
use crate::nn::{ParamId, ParamStore, Tensor};
use crate::rng::{rng_from_seed, SimRng};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    MulConst(Var, Vec<f64>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax(Var),
    Transpose(Var),
    Reshape(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows {
        table: Var,
        indices: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Vec<(usize, f64)>>,
        probs: Vec<f64>,
    },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    dropout_rng: Option<SimRng>,
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Config(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
}

pub(crate) fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044_715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044_715 * x * x)
}

impl Graph {
    /// Inference graph: dropout is the identity.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training graph: dropout masks are drawn from a stream seeded by `seed`.
    pub fn training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            dropout_rng: Some(rng_from_seed(seed)),
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Read a parameter into the graph. Repeated reads share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.matmul(bv)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// `a (n×m) + row (1×m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.len() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let cols = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv.data()[i % cols])
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x * s).collect())
            .expect("same shape");
        self.push(out, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| gelu(x)).collect())
            .expect("same shape");
        self.push(out, Op::Gelu(a))
    }

    /// Inverted dropout; identity on inference graphs or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        let keep = 1.0 - rate;
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let av = self.value(a);
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::MulConst(a, mask))
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (1×m each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.len() != cols || bv.len() != cols {
            return Err(shape_err("layer_norm", xv, gv));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        ))
    }

    /// Row-wise softmax. Masked entries (`false`) get probability 0. The mask
    /// holds either one flag per column, shared by all rows, or one flag per
    /// element.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let per_row = match mask {
            Some(m) if m.len() == cols => false,
            Some(m) if m.len() == av.len() => true,
            Some(m) => {
                return Err(Error::Config(format!(
                    "softmax mask has {} entries for a {}x{cols} input",
                    m.len(),
                    av.rows()
                )))
            }
            None => false,
        };
        let mut out = vec![0.0; av.len()];
        for r in 0..av.rows() {
            let row_mask = mask.map(|m| if per_row { &m[r * cols..(r + 1) * cols] } else { m });
            if row_mask.is_some_and(|m| !m.iter().any(|&k| k)) {
                return Err(Error::Contract("softmax over a fully masked row".into()));
            }
            let o = &mut out[r * cols..(r + 1) * cols];
            crate::nn::functional::softmax_masked_into(av.row(r), row_mask, o);
        }
        let out = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Same data viewed as `rows × cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let data = self.value(a).data().to_vec();
        if data.len() != rows * cols {
            return Err(Error::Config(format!("cannot view {} values as {rows}x{cols}", data.len())));
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        if start + len > cols {
            return Err(Error::Config(format!("slice {start}..{} out of {cols} columns", start + len)));
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(out, Op::SliceCols { x: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Config("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::Config("concat_rows: column counts differ".into()));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Select rows of `table` (embedding lookup, row repetition).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (rows, cols) = (tv.rows(), tv.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Contract(format!("row index {bad} out of range 0..{rows}")));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::new(vec![indices.len(), cols], data)?;
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Weighted cross-entropy summed over rows:
    /// `Σ_r Σ_(c,w) −w · log softmax(logits_r)_c`. Returns a 1×1 node.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Vec<(usize, f64)>>) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, cols) = (lv.rows(), lv.cols());
        if targets.len() != rows {
            return Err(Error::Config(format!("{} target rows for {rows} logit rows", targets.len())));
        }
        let mut probs = vec![0.0; rows * cols];
        let mut loss = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let row = lv.row(r);
            let lse = crate::nn::functional::log_sum_exp(row);
            for c in 0..cols {
                probs[r * cols + c] = (row[c] - lse).exp();
            }
            for &(c, w) in target {
                if c >= cols {
                    return Err(Error::Contract(format!("target class {c} out of range 0..{cols}")));
                }
                loss += w * (lse - row[c]);
            }
        }
        let out = Tensor::new(vec![1, 1], vec![loss])?;
        Ok(self.push(out, Op::CrossEntropy { logits, targets, probs }))
    }

    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let shape = self.value(parts[0]).shape().to_vec();
        let mut acc = vec![0.0; self.value(parts[0]).len()];
        for &p in parts {
            let v = self.value(p);
            if v.shape() != shape.as_slice() {
                return Err(shape_err("sum", self.value(parts[0]), v));
            }
            acc.iter_mut().zip(v.data()).for_each(|(a, x)| *a += x);
        }
        let out = Tensor::new(shape, acc)?;
        Ok(self.push(out, Op::Sum(parts.to_vec())))
    }

    /// Backpropagate from scalar `loss`, adding parameter gradients into
    /// `store` (parameters with `requires_grad == false` are skipped).
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Config("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        let nodes = &self.nodes;
        // Adds into the gradient buffer of `v`, allocating it on first use.
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(buf)
        };

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    if p.requires_grad {
                        p.grad.data_mut().iter_mut().zip(&g).for_each(|(a, x)| *a += x);
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    acc(&mut grads, *a, &mut |ga| matmul_a_bt_into(&g, bv.data(), ga, m, n, k));
                    acc(&mut grads, *b, &mut |gb| matmul_at_b_into(av.data(), &g, gb, m, k, n));
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        acc(&mut grads, *v, &mut |gv| gv.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    }
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *a, &mut |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    let cols = self.nodes[row.0].value.len();
                    acc(&mut grads, *row, &mut |gr| {
                        for (i, y) in g.iter().enumerate() {
                            gr[i % cols] += y;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    acc(&mut grads, *a, &mut |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += s * y));
                }
                Op::Gelu(a) => {
                    let av = &self.nodes[a.0].value;
                    acc(&mut grads, *a, &mut |ga| {
                        for ((x, y), &inp) in ga.iter_mut().zip(&g).zip(av.data()) {
                            *x += y * gelu_grad(inp);
                        }
                    });
                }
                Op::MulConst(a, mask) => {
                    acc(&mut grads, *a, &mut |ga| {
                        for ((x, y), m) in ga.iter_mut().zip(&g).zip(mask) {
                            *x += y * m;
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gv = self.nodes[gamma.0].value.data();
                    let cols = gv.len();
                    let rows = rstd.len();
                    acc(&mut grads, *gamma, &mut |gg| {
                        for r in 0..rows {
                            for c in 0..cols {
                                gg[c] += g[r * cols + c] * xhat[r * cols + c];
                            }
                        }
                    });
                    acc(&mut grads, *beta, &mut |gb| {
                        for r in 0..rows {
                            for c in 0..cols {
                                gb[c] += g[r * cols + c];
                            }
                        }
                    });
                    acc(&mut grads, *x, &mut |gx| {
                        for r in 0..rows {
                            let dxhat: Vec<f64> = (0..cols).map(|c| g[r * cols + c] * gv[c]).collect();
                            let h = &xhat[r * cols..(r + 1) * cols];
                            let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                            let mean_dh = dxhat.iter().zip(h).map(|(d, x)| d * x).sum::<f64>() / cols as f64;
                            for c in 0..cols {
                                gx[r * cols + c] += rstd[r] * (dxhat[c] - mean_d - h[c] * mean_dh);
                            }
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let cols = y.cols();
                    acc(&mut grads, *a, &mut |ga| {
                        for r in 0..y.rows() {
                            let yr = y.row(r);
                            let gr = &g[r * cols..(r + 1) * cols];
                            let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                            for c in 0..cols {
                                ga[r * cols + c] += yr[c] * (gr[c] - dot);
                            }
                        }
                    });
                }
                Op::Transpose(a) => {
                    let (rows, cols) = (node.value.rows(), node.value.cols());
                    acc(&mut grads, *a, &mut |ga| {
                        for i in 0..rows {
                            for j in 0..cols {
                                ga[j * rows + i] += g[i * cols + j];
                            }
                        }
                    });
                }
                Op::Reshape(a) => {
                    acc(&mut grads, *a, &mut |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                }
                Op::SliceCols { x, start } => {
                    let in_cols = self.nodes[x.0].value.cols();
                    let (rows, len) = (node.value.rows(), node.value.cols());
                    acc(&mut grads, *x, &mut |gx| {
                        for r in 0..rows {
                            for c in 0..len {
                                gx[r * in_cols + start + c] += g[r * len + c];
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let (rows, total) = (node.value.rows(), node.value.cols());
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        acc(&mut grads, *p, &mut |gp| {
                            for r in 0..rows {
                                for c in 0..w {
                                    gp[r * w + c] += g[r * total + offset + c];
                                }
                            }
                        });
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        acc(&mut grads, *p, &mut |gp| {
                            gp.iter_mut().zip(&g[offset..offset + n]).for_each(|(x, y)| *x += y)
                        });
                        offset += n;
                    }
                }
                Op::GatherRows { table, indices } => {
                    let cols = node.value.cols();
                    acc(&mut grads, *table, &mut |gt| {
                        for (r, &i) in indices.iter().enumerate() {
                            for c in 0..cols {
                                gt[i * cols + c] += g[r * cols + c];
                            }
                        }
                    });
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let cols = self.nodes[logits.0].value.cols();
                    let up = g[0];
                    acc(&mut grads, *logits, &mut |gl| {
                        for (r, target) in targets.iter().enumerate() {
                            let total: f64 = target.iter().map(|(_, w)| w).sum();
                            for c in 0..cols {
                                gl[r * cols + c] += up * total * probs[r * cols + c];
                            }
                            for &(c, w) in target {
                                gl[r * cols + c] -= up * w;
                            }
                        }
                    });
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, &mut |gp| gp.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    }
                }
            }
        }
        Ok(())
    }
}
