//! Hierarchical history encoder: probe tokens → attention-pooled slot
//! vectors → transformer over slots with a CLS summary.

use serde::{Deserialize, Serialize};

use crate::env::{FeedbackConfig, HistoryBuffer, ProbeRecord};
use crate::error::{Error, Result};
use crate::nn::{Embedding, Graph, LayerNorm, Linear, ParamId, ParamStore, TransformerLayer, Var};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { dim: 256, heads: 4, layers: 2, dropout: 0.05 }
    }
}

impl EncoderConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation(format!("{path}.dim"), "must be positive"));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::validation(format!("{path}.heads"), "must divide dim"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation(format!("{path}.dropout"), "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Encoder inputs for one slot, padded to `P` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTokens {
    pub beams: Vec<usize>,
    /// Normalized feedback in `[−1, 1]`.
    pub feedback: Vec<f64>,
    /// `false` for padding entries.
    pub mask: Vec<bool>,
}

/// Slots newest first: `t−1, t−2, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryTokens {
    pub slots: Vec<SlotTokens>,
}

/// Padding entries use the null token (beam id `K`) with feedback −1.
pub fn tokenize_slot(record: &ProbeRecord, fb: &FeedbackConfig, probes: usize, n_beams: usize) -> Result<SlotTokens> {
    if record.probes.len() > probes || record.probes.len() != record.feedback_db.len() {
        return Err(Error::Contract(format!(
            "slot {} has {} probes and {} reports, encoder expects at most {probes}",
            record.t,
            record.probes.len(),
            record.feedback_db.len()
        )));
    }
    if let Some(&b) = record.probes.iter().find(|&&b| b >= n_beams) {
        return Err(Error::Contract(format!("beam index {b} out of range 0..{n_beams}")));
    }
    let mut tokens = SlotTokens {
        beams: record.probes.clone(),
        feedback: record.feedback_db.iter().map(|&f| fb.normalize(f)).collect(),
        mask: vec![true; record.probes.len()],
    };
    tokens.beams.resize(probes, n_beams);
    tokens.feedback.resize(probes, -1.0);
    tokens.mask.resize(probes, false);
    Ok(tokens)
}

pub fn tokenize_history(
    history: &HistoryBuffer,
    fb: &FeedbackConfig,
    probes: usize,
    n_beams: usize,
) -> Result<HistoryTokens> {
    let slots = history
        .newest_first()
        .map(|r| tokenize_slot(r, fb, probes, n_beams))
        .collect::<Result<_>>()?;
    Ok(HistoryTokens { slots })
}

#[derive(Clone, Debug)]
pub struct HistoryEncoder {
    pub dim: usize,
    pub n_beams: usize,
    pub probes: usize,
    pub history: usize,
    pub beam_emb: Embedding,
    pub fb_hidden: Linear,
    pub fb_out: Linear,
    pub pos_emb: Embedding,
    pub score_hidden: Linear,
    pub score_out: Linear,
    pub time_emb: Embedding,
    pub cls: ParamId,
    pub layers: Vec<TransformerLayer>,
    pub final_norm: LayerNorm,
}

impl HistoryEncoder {
    /// Registers parameters under `prefix.*`.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &EncoderConfig,
        n_beams: usize,
        probes: usize,
        history: usize,
        rng: &mut SimRng,
    ) -> Result<Self> {
        cfg.validate(prefix)?;
        let d = cfg.dim;
        let name = |s: &str| format!("{prefix}.{s}");
        let beam_emb = Embedding::new(store, &name("beam_emb"), n_beams + 1, d, rng);
        let fb_hidden = Linear::new(store, &name("fb.0"), 1, d, rng);
        let fb_out = Linear::new(store, &name("fb.1"), d, d, rng);
        let pos_emb = Embedding::new(store, &name("pos_emb"), probes, d, rng);
        let score_hidden = Linear::new(store, &name("score.0"), d, d, rng);
        let score_out = Linear::new(store, &name("score.1"), d, 1, rng);
        let time_emb = Embedding::new(store, &name("time_emb"), history, d, rng);
        let cls = store.add_normal(name("cls"), &[1, d], Embedding::INIT_STD, rng);
        let layers = (0..cfg.layers)
            .map(|i| TransformerLayer::new(store, &name(&format!("layer{i}")), d, cfg.heads, cfg.dropout, rng))
            .collect::<Result<_>>()?;
        let final_norm = LayerNorm::new(store, &name("norm"), d);
        Ok(HistoryEncoder {
            dim: d,
            n_beams,
            probes,
            history,
            beam_emb,
            fb_hidden,
            fb_out,
            pos_emb,
            score_hidden,
            score_out,
            time_emb,
            cls,
            layers,
            final_norm,
        })
    }

    /// Token rows `beam_emb[b] + mlp(feedback)` for the given entries.
    pub fn embed_tokens(&self, g: &mut Graph, store: &ParamStore, beams: &[usize], feedback: &[f64]) -> Result<Var> {
        if let Some(&b) = beams.iter().find(|&&b| b > self.n_beams) {
            return Err(Error::Contract(format!("beam token {b} out of range 0..={}", self.n_beams)));
        }
        let e = self.beam_emb.forward(g, store, beams)?;
        let x = g.constant(crate::nn::Tensor::new(vec![feedback.len(), 1], feedback.to_vec())?);
        let h = self.fb_hidden.forward(g, store, x)?;
        let h = g.gelu(h);
        let f = self.fb_out.forward(g, store, h)?;
        g.add(e, f)
    }

    /// Adds probe-position embeddings to `n_slots · P` token rows and
    /// attention-pools each slot. Returns the slot vectors (`n_slots × d`)
    /// and pooling weights (`n_slots × P`).
    pub fn pool_slots(&self, g: &mut Graph, store: &ParamStore, tokens: Var, mask: &[bool]) -> Result<(Var, Var)> {
        let p = self.probes;
        let rows = g.value(tokens).rows();
        if rows % p != 0 || mask.len() != rows {
            return Err(Error::Contract(format!("{rows} token rows do not form slots of {p} probes")));
        }
        let n_slots = rows / p;
        let positions: Vec<usize> = (0..rows).map(|r| r % p).collect();
        let pos = self.pos_emb.forward(g, store, &positions)?;
        let z = g.add(tokens, pos)?;
        let s = self.score_hidden.forward(g, store, z)?;
        let s = g.gelu(s);
        let s = self.score_out.forward(g, store, s)?;
        let s = g.reshape(s, n_slots, p)?;
        let alpha = g.softmax(s, Some(mask))?;
        let mut pooled = Vec::with_capacity(n_slots);
        for i in 0..n_slots {
            let a = g.gather_rows(alpha, &[i])?;
            let zi = g.gather_rows(z, &(i * p..(i + 1) * p).collect::<Vec<_>>())?;
            pooled.push(g.matmul(a, zi)?);
        }
        Ok((g.concat_rows(&pooled)?, alpha))
    }

    /// Context vector `c_t` (1 × d).
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, history: &HistoryTokens) -> Result<Var> {
        if history.slots.is_empty() {
            return Err(Error::Contract("cannot encode an empty history".into()));
        }
        let slots = &history.slots[..history.slots.len().min(self.history)];
        let mut beams = Vec::with_capacity(slots.len() * self.probes);
        let mut feedback = Vec::with_capacity(beams.capacity());
        let mut mask = Vec::with_capacity(beams.capacity());
        for s in slots {
            if s.beams.len() != self.probes || s.feedback.len() != self.probes || s.mask.len() != self.probes {
                return Err(Error::Contract(format!("slot tokens must have {} entries", self.probes)));
            }
            beams.extend_from_slice(&s.beams);
            feedback.extend_from_slice(&s.feedback);
            mask.extend_from_slice(&s.mask);
        }
        let tokens = self.embed_tokens(g, store, &beams, &feedback)?;
        let (f, _) = self.pool_slots(g, store, tokens, &mask)?;
        let time = self.time_emb.forward(g, store, &(0..slots.len()).collect::<Vec<_>>())?;
        let f = g.add(f, time)?;
        let cls = g.param(store, self.cls);
        let mut x = g.concat_rows(&[cls, f])?;
        for layer in &self.layers {
            x = layer.forward(g, store, x)?;
        }
        let x = self.final_norm.forward(g, store, x)?;
        g.gather_rows(x, &[0])
    }

    /// Inference-mode context vector.
    pub fn context(&self, store: &ParamStore, history: &HistoryTokens) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let c = self.encode(&mut g, store, history)?;
        Ok(g.value(c).data().to_vec())
    }
}
