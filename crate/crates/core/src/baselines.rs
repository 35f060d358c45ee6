//! Baseline proposers: EMA tracker, UCB bandit, the discriminative TRM
//! (shared encoder + softmax head) and a uniform random stub.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize_history, EncoderConfig, HistoryEncoder, HistoryTokens};
use crate::env::{EmaPolicy, FeedbackConfig, HistoryBuffer, Proposal, Proposer, ProbeRecord, SlotView};
use crate::error::{Error, Result};
use crate::nn::{softmax, Graph, Linear, ParamStore, Var};
use crate::ranking::form_probe_set;
use crate::rng::{random_subset, rng_from_seed, SimRng};
use crate::training::{Example, Trainable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmaConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub init_db: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        EmaConfig { alpha: 0.3, epsilon: 0.1, init_db: -10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UcbConfig {
    /// Exploration constant on normalized feedback.
    pub c: f64,
    pub epsilon: f64,
}

impl Default for UcbConfig {
    fn default() -> Self {
        UcbConfig { c: 2.0, epsilon: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    pub ema: EmaConfig,
    pub ucb: UcbConfig,
}

impl BaselinesConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let e = &self.ema;
        if !(e.alpha > 0.0 && e.alpha <= 1.0) {
            return Err(Error::validation(format!("{path}.ema.alpha"), "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&e.epsilon) {
            return Err(Error::validation(format!("{path}.ema.epsilon"), "must lie in [0, 1]"));
        }
        if !e.init_db.is_finite() {
            return Err(Error::validation(format!("{path}.ema.init_db"), "must be finite"));
        }
        if !(self.ucb.c >= 0.0) {
            return Err(Error::validation(format!("{path}.ucb.c"), "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.ucb.epsilon) {
            return Err(Error::validation(format!("{path}.ucb.epsilon"), "must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn ema_baseline(cfg: &EmaConfig, n_beams: usize, probes: usize, list_len: usize) -> EmaPolicy {
    EmaPolicy::baseline(cfg.alpha, cfg.epsilon, cfg.init_db, n_beams, probes, list_len)
}

/// Indices by descending score, ties to the lower index.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// UCB counters over normalized feedback.
#[derive(Clone, Debug, PartialEq)]
pub struct UcbState {
    pub counts: Vec<u64>,
    pub means: Vec<f64>,
    pub c: f64,
    /// Number of observed slots.
    pub t: u64,
}

impl UcbState {
    pub fn new(n_beams: usize, c: f64) -> Self {
        UcbState { counts: vec![0; n_beams], means: vec![0.0; n_beams], c, t: 0 }
    }

    /// `μ̂(k) + c·sqrt(ln t / n(k))`, `+∞` for unexplored beams.
    pub fn score(&self, k: usize) -> f64 {
        if self.counts[k] == 0 {
            return f64::INFINITY;
        }
        let t = self.t.max(1) as f64;
        self.means[k] + self.c * (t.ln() / self.counts[k] as f64).sqrt()
    }

    pub fn scores(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.score(k)).collect()
    }

    pub fn update(&mut self, beam: usize, value: f64) {
        self.counts[beam] += 1;
        self.means[beam] += (value - self.means[beam]) / self.counts[beam] as f64;
    }
}

/// ε-greedy UCB: per slot, with probability ε a uniform random probe set,
/// otherwise the top-P UCB scores.
#[derive(Clone, Debug)]
pub struct UcbPolicy {
    pub state: UcbState,
    pub epsilon: f64,
    pub feedback: FeedbackConfig,
    pub probes: usize,
    pub list_len: usize,
}

impl UcbPolicy {
    pub fn new(cfg: &UcbConfig, feedback: &FeedbackConfig, n_beams: usize, probes: usize, list_len: usize) -> Self {
        UcbPolicy { state: UcbState::new(n_beams, cfg.c), epsilon: cfg.epsilon, feedback: feedback.clone(), probes, list_len }
    }
}

impl Proposer for UcbPolicy {
    fn name(&self) -> &str {
        "ucb"
    }

    fn reset(&mut self) {
        self.state = UcbState::new(self.state.counts.len(), self.state.c);
    }

    fn propose(&mut self, _history: &HistoryBuffer, _view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let n_beams = self.state.counts.len();
        let ranking = descending(&self.state.scores());
        let probes = if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            random_subset(rng, n_beams, self.probes)
        } else {
            ranking[..self.probes].to_vec()
        };
        let mut list = ranking;
        list.truncate(self.list_len);
        Ok(Proposal { list, probes })
    }

    fn observe(&mut self, record: &ProbeRecord) {
        self.state.t += 1;
        for (&b, &fb) in record.probes.iter().zip(&record.feedback_db) {
            self.state.update(b, self.feedback.normalize(fb));
        }
    }
}

/// Transformer ranking model: the history encoder (`trm.enc.*`) followed by
/// a linear head (`trm.head.*`) over the K beams.
#[derive(Clone, Debug)]
pub struct TrmModel {
    pub store: ParamStore,
    pub encoder: HistoryEncoder,
    pub head: Linear,
}

impl TrmModel {
    pub fn new(enc: &EncoderConfig, n_beams: usize, probes: usize, history: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let mut store = ParamStore::new();
        let encoder = HistoryEncoder::new(&mut store, "trm.enc", enc, n_beams, probes, history, &mut rng)?;
        let head = Linear::new(&mut store, "trm.head", enc.dim, n_beams, &mut rng);
        Ok(TrmModel { store, encoder, head })
    }

    pub fn n_beams(&self) -> usize {
        self.head.dout
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, history: &HistoryTokens) -> Result<Var> {
        let c = self.encoder.encode(g, store, history)?;
        self.head.forward(g, store, c)
    }

    pub fn probabilities(&self, history: &HistoryTokens) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let logits = self.logits(&mut g, &self.store, history)?;
        Ok(softmax(g.value(logits).data()))
    }
}

/// Dense soft-label target, optionally smoothed toward uniform.
fn trm_target(ex: &Example, n_beams: usize, smoothing: f64) -> Vec<(usize, f64)> {
    let mut dense = vec![smoothing / n_beams as f64; n_beams];
    for (&k, &p) in ex.label.idx.iter().zip(&ex.label.p) {
        dense[k] += (1.0 - smoothing) * p;
    }
    dense.into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect()
}

impl Trainable for TrmModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&Example], smoothing: f64, _rng: &mut SimRng) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let mut contexts = Vec::with_capacity(batch.len());
        for ex in batch {
            contexts.push(self.encoder.encode(g, &self.store, &ex.history)?);
        }
        let contexts = g.concat_rows(&contexts)?;
        let logits = self.head.forward(g, &self.store, contexts)?;
        let targets = batch.iter().map(|ex| trm_target(ex, self.n_beams(), smoothing)).collect();
        let total = g.cross_entropy(logits, targets)?;
        Ok(g.scale(total, 1.0 / batch.len() as f64))
    }
}

/// Top-S beams by predicted probability, ties to the lower index.
pub fn trm_propose(probs: &[f64], proposal_len: usize) -> Vec<usize> {
    let mut list = descending(probs);
    list.truncate(proposal_len);
    list
}

#[derive(Clone, Debug)]
pub struct TrmProposer {
    pub model: Arc<TrmModel>,
    pub feedback: FeedbackConfig,
    pub probes: usize,
    pub proposal_len: usize,
}

impl Proposer for TrmProposer {
    fn name(&self) -> &str {
        "trm"
    }

    fn reset(&mut self) {}

    fn propose(&mut self, history: &HistoryBuffer, _view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let k = self.model.n_beams();
        let tokens = tokenize_history(history, &self.feedback, self.probes, k)?;
        let list = trm_propose(&self.model.probabilities(&tokens)?, self.proposal_len);
        let probes = form_probe_set(&list, self.probes, k, rng);
        Ok(Proposal { list, probes })
    }

    fn observe(&mut self, _record: &ProbeRecord) {}
}

/// Uniform random probe set each slot; the proposal list is the probe set.
#[derive(Clone, Debug)]
pub struct RandomProposer {
    pub n_beams: usize,
    pub probes: usize,
}

impl Proposer for RandomProposer {
    fn name(&self) -> &str {
        "random-stub"
    }

    fn reset(&mut self) {}

    fn propose(&mut self, _history: &HistoryBuffer, _view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let probes = random_subset(rng, self.n_beams, self.probes);
        Ok(Proposal { list: probes.clone(), probes })
    }

    fn observe(&mut self, _record: &ProbeRecord) {}
}
