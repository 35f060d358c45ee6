//! Conditional discrete diffusion over beam indices: uniform-mixing forward
//! chain, x0-parameterized reverse sampling and soft-label training.

pub mod denoiser;
pub mod kernel;
pub mod schedule;

use rand::Rng;

pub use denoiser::{Denoiser, FastDenoiser};
pub use kernel::{
    forward_kernel, forward_marginal, forward_sample, forward_step_sample, posterior, reverse_distribution,
    reverse_distribution_direct,
};
pub use schedule::{DiffusionConfig, DiffusionSchedule, ScheduleKind};

use crate::encoder::{EncoderConfig, HistoryEncoder, HistoryTokens};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::rng::{rng_from_seed, sample_categorical, SimRng};
use crate::training::{smoothed_target, Example, Trainable};

/// Anything that predicts a distribution over the clean index.
pub trait CleanPredictor {
    fn n_beams(&self) -> usize;
    /// One distribution per entry of `x_tau`, all at step `tau` (1-based).
    fn predict(&self, x_tau: &[usize], tau: usize) -> Vec<Vec<f64>>;
}

/// Perfect denoiser: all mass on a known clean index.
#[derive(Clone, Debug)]
pub struct OracleDenoiser {
    pub n_beams: usize,
    pub target: usize,
}

impl CleanPredictor for OracleDenoiser {
    fn n_beams(&self) -> usize {
        self.n_beams
    }

    fn predict(&self, x_tau: &[usize], _tau: usize) -> Vec<Vec<f64>> {
        let mut p = vec![0.0; self.n_beams];
        p[self.target] = 1.0;
        vec![p; x_tau.len()]
    }
}

/// Uninformative denoiser: uniform over all indices.
#[derive(Clone, Debug)]
pub struct UniformDenoiser {
    pub n_beams: usize,
}

impl CleanPredictor for UniformDenoiser {
    fn n_beams(&self) -> usize {
        self.n_beams
    }

    fn predict(&self, x_tau: &[usize], _tau: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0 / self.n_beams as f64; self.n_beams]; x_tau.len()]
    }
}

/// Trained denoiser bound to one context vector.
pub struct ContextDenoiser<'a> {
    pub fast: &'a FastDenoiser,
    pub context_bias: Vec<f64>,
}

impl CleanPredictor for ContextDenoiser<'_> {
    fn n_beams(&self) -> usize {
        self.fast.n_beams()
    }

    fn predict(&self, x_tau: &[usize], tau: usize) -> Vec<Vec<f64>> {
        self.fast.probs(&self.context_bias, x_tau, tau)
    }
}

/// A generated clean index with the final-step log-probability
/// `ℓ = log π(x0 | x_1, 1, c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub x0: usize,
    pub log_prob: f64,
}

/// Runs `n` independent reverse chains from uniform `x_{T_d}` down to `x_0`.
pub fn sample_x0(
    predictor: &dyn CleanPredictor,
    schedule: &DiffusionSchedule,
    n: usize,
    rng: &mut SimRng,
) -> Vec<Sample> {
    let k = predictor.n_beams();
    let mut xs: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    for tau in (2..=schedule.steps()).rev() {
        let probs = predictor.predict(&xs, tau);
        for (x, pi) in xs.iter_mut().zip(&probs) {
            let p = reverse_distribution(*x, tau, pi, schedule);
            *x = sample_categorical(rng, &p);
        }
    }
    let probs = predictor.predict(&xs, 1);
    probs
        .iter()
        .map(|pi| {
            let x0 = sample_categorical(rng, pi);
            Sample { x0, log_prob: pi[x0].ln() }
        })
        .collect()
}

/// History encoder plus denoiser sharing one parameter store
/// (`enc.*`, `den.*`).
#[derive(Clone, Debug)]
pub struct D3pmModel {
    pub store: ParamStore,
    pub encoder: HistoryEncoder,
    pub denoiser: Denoiser,
    pub schedule: DiffusionSchedule,
}

impl D3pmModel {
    pub fn new(
        enc: &EncoderConfig,
        diffusion: &DiffusionConfig,
        n_beams: usize,
        probes: usize,
        history: usize,
        seed: u64,
    ) -> Result<Self> {
        let schedule = diffusion.build()?;
        let mut rng = rng_from_seed(seed);
        let mut store = ParamStore::new();
        let encoder = HistoryEncoder::new(&mut store, "enc", enc, n_beams, probes, history, &mut rng)?;
        let denoiser = Denoiser::new(&mut store, "den", enc.dim, n_beams, schedule.steps(), &mut rng);
        Ok(D3pmModel { store, encoder, denoiser, schedule })
    }

    pub fn n_beams(&self) -> usize {
        self.denoiser.n_beams
    }

    pub fn context(&self, history: &HistoryTokens) -> Result<Vec<f64>> {
        self.encoder.context(&self.store, history)
    }

    pub fn fast_denoiser(&self) -> Result<FastDenoiser> {
        FastDenoiser::new(&self.denoiser, &self.store)
    }

    /// Denoiser distribution through the graph path (for checks).
    pub fn denoise(&self, context: &[f64], x_tau: usize, tau: usize) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let c = g.constant(Tensor::row_vector(context.to_vec()));
        let logits = self.denoiser.logits(&mut g, &self.store, &[x_tau], &[tau], c, &[0])?;
        Ok(crate::nn::softmax(g.value(logits).data()))
    }

    /// Weighted cross-entropy of the denoiser for one row per support beam:
    /// each example draws one τ, and each support beam `k` its own
    /// `x_τ ~ q(·|k)`, weighted by the label mass `p★_k`.
    pub fn loss_rows(
        &self,
        g: &mut Graph,
        contexts: Var,
        rows: &[(usize, usize, usize, Vec<(usize, f64)>)],
        batch: usize,
    ) -> Result<Var> {
        let ctx: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let x: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let tau: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let logits = self.denoiser.logits(g, &self.store, &x, &tau, contexts, &ctx)?;
        let targets = rows.iter().map(|r| r.3.clone()).collect();
        let total = g.cross_entropy(logits, targets)?;
        Ok(g.scale(total, 1.0 / batch as f64))
    }
}

impl Trainable for D3pmModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&Example], smoothing: f64, rng: &mut SimRng) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let k = self.n_beams();
        let steps = self.schedule.steps();
        let mut contexts = Vec::with_capacity(batch.len());
        let mut rows = Vec::new();
        for (i, ex) in batch.iter().enumerate() {
            contexts.push(self.encoder.encode(g, &self.store, &ex.history)?);
            let tau = rng.random_range(1..=steps);
            for (&beam, &w) in ex.label.idx.iter().zip(&ex.label.p) {
                let x_tau = forward_sample(beam, tau, &self.schedule, k, rng);
                rows.push((i, x_tau, tau, smoothed_target(beam, w, k, smoothing)));
            }
        }
        let contexts = g.concat_rows(&contexts)?;
        self.loss_rows(g, contexts, &rows, batch.len())
    }
}
