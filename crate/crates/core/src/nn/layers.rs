use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::SimRng;

/// Affine map `x·W + b` with `W` stored `din × dout`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut SimRng) -> Self {
        Linear {
            weight: store.add_dense(format!("{name}.w"), din, dout, rng),
            bias: store.add_zeros(format!("{name}.b"), &[1, dout]),
            din,
            dout,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.value(x).cols() != self.din {
            return Err(Error::Config(format!(
                "linear layer expects {} input features, got {}",
                self.din,
                g.value(x).cols()
            )));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Graph-free `input·weights + bias`.
pub fn linear_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if bias.len() != weights.cols() {
        return Err(Error::Config(format!(
            "bias has {} entries for {} outputs",
            bias.len(),
            weights.cols()
        )));
    }
    let mut out = input.matmul(weights)?;
    let cols = out.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += bias.data()[i % cols];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add_ones(format!("{name}.gamma"), &[1, dim]),
            beta: store.add_zeros(format!("{name}.beta"), &[1, dim]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub const INIT_STD: f64 = 0.02;

    pub fn new(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut SimRng) -> Self {
        Embedding {
            table: store.add_normal(name, &[rows, dim], Self::INIT_STD, rng),
            rows,
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, indices: &[usize]) -> Result<Var> {
        let t = g.param(store, self.table);
        g.gather_rows(t, indices)
    }
}

/// Scaled dot-product attention with `heads` heads and an output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut SimRng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("model dim {dim} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, queries: Var, keys: Var, values: Var) -> Result<Var> {
        self.forward_with_weights(g, store, queries, keys, values).map(|(out, _)| out)
    }

    /// Like [`forward`](Self::forward) but also returns the per-head
    /// attention weight matrices (queries × keys, rows sum to one).
    pub fn forward_with_weights(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        keys: Var,
        values: Var,
    ) -> Result<(Var, Vec<Var>)> {
        if g.value(keys).rows() != g.value(values).rows() {
            return Err(Error::Config("keys and values differ in length".into()));
        }
        let q = self.query.forward(g, store, queries)?;
        let k = self.key.forward(g, store, keys)?;
        let v = self.value.forward(g, store, values)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim)?;
            let kh = g.slice_cols(k, h * head_dim, head_dim)?;
            let vh = g.slice_cols(v, h * head_dim, head_dim)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax(scores, None)?;
            outputs.push(g.matmul(attn, vh)?);
            weights.push(attn);
        }
        let merged = g.concat_cols(&outputs)?;
        Ok((self.output.forward(g, store, merged)?, weights))
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut SimRng) -> Self {
        FeedForward {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let h = g.gelu(h);
        self.down.forward(g, store, h)
    }
}

/// Pre-norm encoder block:
/// `x + drop(attn(ln1(x)))`, then `x + drop(ff(ln2(x)))`.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
    pub dropout: f64,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        dropout: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        Ok(TransformerLayer {
            norm_attn: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm_ff: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, 4 * dim, rng),
            dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm_attn.forward(g, store, x)?;
        let a = self.attn.forward(g, store, h, h, h)?;
        let a = g.dropout(a, self.dropout);
        let x = g.add(x, a)?;
        let h = self.norm_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h)?;
        let f = g.dropout(f, self.dropout);
        g.add(x, f)
    }
}
