use crate::error::{Error, Result};
use crate::nn::{Embedding, Graph, Linear, ParamStore, Tensor, Var};
use crate::nn::functional::softmax;
use crate::rng::SimRng;

/// `π_ψ(x0 | x_τ, τ, c)`: embeddings of `x_τ` and `τ` concatenated with the
/// context, then a two-hidden-layer GELU MLP to `K` logits.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub dim: usize,
    pub n_beams: usize,
    pub steps: usize,
    pub x_emb: Embedding,
    pub t_emb: Embedding,
    pub hidden1: Linear,
    pub hidden2: Linear,
    pub out: Linear,
}

impl Denoiser {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, n_beams: usize, steps: usize, rng: &mut SimRng) -> Self {
        let name = |s: &str| format!("{prefix}.{s}");
        Denoiser {
            dim,
            n_beams,
            steps,
            x_emb: Embedding::new(store, &name("x_emb"), n_beams, dim, rng),
            t_emb: Embedding::new(store, &name("t_emb"), steps, dim, rng),
            hidden1: Linear::new(store, &name("mlp.0"), 3 * dim, 2 * dim, rng),
            hidden2: Linear::new(store, &name("mlp.1"), 2 * dim, dim, rng),
            out: Linear::new(store, &name("mlp.2"), dim, n_beams, rng),
        }
    }

    /// Logits for rows `(x_τ[i], τ[i], contexts[ctx[i]])`. `tau` is 1-based.
    pub fn logits(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x_tau: &[usize],
        tau: &[usize],
        contexts: Var,
        ctx: &[usize],
    ) -> Result<Var> {
        if tau.iter().any(|&t| t == 0 || t > self.steps) {
            return Err(Error::Contract(format!("diffusion step outside 1..={}", self.steps)));
        }
        let x = self.x_emb.forward(g, store, x_tau)?;
        let t_rows: Vec<usize> = tau.iter().map(|t| t - 1).collect();
        let t = self.t_emb.forward(g, store, &t_rows)?;
        let c = g.gather_rows(contexts, ctx)?;
        let h = g.concat_cols(&[x, t, c])?;
        let h = self.hidden1.forward(g, store, h)?;
        let h = g.gelu(h);
        let h = self.hidden2.forward(g, store, h)?;
        let h = g.gelu(h);
        self.out.forward(g, store, h)
    }
}

/// Graph-free denoiser with the `x_τ` and `τ` contributions to the first
/// layer precomputed.
#[derive(Clone, Debug)]
pub struct FastDenoiser {
    dim: usize,
    n_beams: usize,
    x_part: Tensor,
    t_part: Tensor,
    c_weight: Tensor,
    b1: Vec<f64>,
    w2: Tensor,
    b2: Vec<f64>,
    w3: Tensor,
    b3: Vec<f64>,
}

fn rows_of(t: &Tensor, start: usize, len: usize) -> Tensor {
    let cols = t.cols();
    Tensor::new(vec![len, cols], t.data()[start * cols..(start + len) * cols].to_vec()).unwrap()
}

impl FastDenoiser {
    pub fn new(den: &Denoiser, store: &ParamStore) -> Result<Self> {
        let d = den.dim;
        let w1 = store.value(den.hidden1.weight);
        let x_part = store.value(den.x_emb.table).matmul(&rows_of(w1, 0, d))?;
        let t_part = store.value(den.t_emb.table).matmul(&rows_of(w1, d, d))?;
        Ok(FastDenoiser {
            dim: d,
            n_beams: den.n_beams,
            x_part,
            t_part,
            c_weight: rows_of(w1, 2 * d, d),
            b1: store.value(den.hidden1.bias).data().to_vec(),
            w2: store.value(den.hidden2.weight).clone(),
            b2: store.value(den.hidden2.bias).data().to_vec(),
            w3: store.value(den.out.weight).clone(),
            b3: store.value(den.out.bias).data().to_vec(),
        })
    }

    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    pub fn steps(&self) -> usize {
        self.t_part.rows()
    }

    /// First-layer contribution `c·W_c + b1` of a context.
    pub fn context_bias(&self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != self.dim {
            return Err(Error::Contract(format!("context has {} entries, expected {}", context.len(), self.dim)));
        }
        let mut out = Tensor::row_vector(context.to_vec()).matmul(&self.c_weight)?.into_data();
        out.iter_mut().zip(&self.b1).for_each(|(o, b)| *o += b);
        Ok(out)
    }

    /// Probabilities for a batch of `x_τ` at a shared step `tau`.
    pub fn probs(&self, context_bias: &[f64], x_tau: &[usize], tau: usize) -> Vec<Vec<f64>> {
        let h = 2 * self.dim;
        let t_row = self.t_part.row(tau - 1);
        let mut h1 = Vec::with_capacity(x_tau.len() * h);
        for &x in x_tau {
            let x_row = self.x_part.row(x);
            h1.extend((0..h).map(|j| crate::nn::gelu(x_row[j] + t_row[j] + context_bias[j])));
        }
        let dense = |input: Vec<f64>, w: &Tensor, b: &[f64], act: bool| {
            let rows = input.len() / w.rows();
            let mut out = Tensor::new(vec![rows, w.rows()], input).unwrap().matmul(w).unwrap().into_data();
            for (i, o) in out.iter_mut().enumerate() {
                *o += b[i % b.len()];
                if act {
                    *o = crate::nn::gelu(*o);
                }
            }
            out
        };
        let h2 = dense(h1, &self.w2, &self.b2, true);
        let logits = dense(h2, &self.w3, &self.b3, false);
        logits.chunks(self.n_beams).map(softmax).collect()
    }
}
