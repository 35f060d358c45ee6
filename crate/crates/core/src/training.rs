//! Supervised pairs and the shared minibatch training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize_history, HistoryTokens};
use crate::env::{history_before, EpisodeLog, FeedbackConfig, SoftLabel};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamW, AdamWConfig, Graph, ParamStore, Var};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamWConfig,
    /// Mass moved from the soft label to the uniform distribution.
    pub label_smoothing: f64,
    /// Global gradient-norm limit; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 20,
            optimizer: AdamWConfig::default(),
            label_smoothing: 0.0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation(format!("{path}.batch_size"), "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::validation(format!("{path}.epochs"), "must be positive"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::validation(format!("{path}.optimizer.lr"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::validation(format!("{path}.label_smoothing"), "must lie in [0, 1)"));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::validation(format!("{path}.grad_clip"), "must be positive"));
        }
        Ok(())
    }
}

/// One supervised pair: the history before slot `t` and the soft label at `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub history: HistoryTokens,
    pub label: SoftLabel,
}

/// Sliding windows over logged episodes: slot `t` with `t ≥ L` is paired
/// with the `L` slots before it.
pub fn build_examples(
    episodes: &[EpisodeLog],
    history: usize,
    feedback: &FeedbackConfig,
    probes: usize,
    n_beams: usize,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for ep in episodes {
        for (i, slot) in ep.slots.iter().enumerate().skip(history) {
            let h = history_before(ep, slot.t, history);
            debug_assert_eq!(h.len(), history.min(i));
            out.push(Example {
                history: tokenize_history(&h, feedback, probes, n_beams)?,
                label: slot.label.clone(),
            });
        }
    }
    Ok(out)
}

/// Per-row targets `(class, weight)`, optionally smoothed toward uniform.
pub fn smoothed_target(beam: usize, weight: f64, n_beams: usize, smoothing: f64) -> Vec<(usize, f64)> {
    if smoothing == 0.0 {
        return vec![(beam, weight)];
    }
    let spread = weight * smoothing / n_beams as f64;
    (0..n_beams)
        .map(|k| (k, spread + if k == beam { weight * (1.0 - smoothing) } else { 0.0 }))
        .collect()
}

/// A model trained by minimizing a per-batch loss.
pub trait Trainable {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Mean loss over `batch`; may draw auxiliary randomness from `rng`.
    fn batch_loss(&self, g: &mut Graph, batch: &[&Example], smoothing: f64, rng: &mut SimRng) -> Result<Var>;
}

/// Shuffled minibatch AdamW. Calls `on_epoch(epoch, mean_loss)` after each
/// epoch and returns the per-epoch mean batch losses.
pub fn fit<M: Trainable>(
    model: &mut M,
    examples: &[Example],
    cfg: &TrainConfig,
    rng: &mut SimRng,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Training("no training examples".into()));
    }
    let mut opt = AdamW::new(cfg.optimizer.clone(), model.store());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let mut g = Graph::training(rng.random());
            let loss = model.batch_loss(&mut g, &batch, cfg.label_smoothing, rng)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Training(format!("non-finite loss {value} at epoch {epoch}, batch {b}")));
            }
            model.store_mut().zero_grad();
            g.backward(loss, model.store_mut())?;
            if let Some(limit) = cfg.grad_clip {
                clip_grad_norm(model.store_mut(), limit);
            }
            opt.step(model.store_mut())
                .map_err(|e| Error::Training(format!("epoch {epoch}, batch {b}: {e}")))?;
            total += value;
            batches += 1;
        }
        let mean = total / batches as f64;
        on_epoch(epoch, mean);
        losses.push(mean);
    }
    Ok(losses)
}
