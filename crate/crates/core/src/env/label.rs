use serde::{Deserialize, Serialize};

use crate::channel::SnrProfile;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Support size M.
    pub top_m: usize,
    /// Softmax temperature τ_lbl in dB.
    pub temperature_db: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig { top_m: 4, temperature_db: 2.0 }
    }
}

impl LabelConfig {
    pub fn validate(&self, path: &str, n_beams: usize) -> Result<()> {
        if self.top_m == 0 || self.top_m > n_beams {
            return Err(Error::validation(format!("{path}.top_m"), format!("must lie in 1..={n_beams}")));
        }
        if !(self.temperature_db > 0.0) {
            return Err(Error::validation(format!("{path}.temperature_db"), "must be positive"));
        }
        Ok(())
    }
}

/// Sparse target distribution over the top-M beams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub idx: Vec<usize>,
    pub p: Vec<f64>,
}

impl SoftLabel {
    pub fn one_hot(beam: usize) -> Self {
        SoftLabel { idx: vec![beam], p: vec![1.0] }
    }

    pub fn validate(&self, n_beams: usize) -> Result<()> {
        if self.idx.is_empty() || self.idx.len() != self.p.len() {
            return Err(Error::Contract("soft label support and weights differ in length".into()));
        }
        for (i, &k) in self.idx.iter().enumerate() {
            if k >= n_beams || self.idx[..i].contains(&k) {
                return Err(Error::Contract(format!("soft label index {k} repeated or out of range")));
            }
        }
        if self.p.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Contract("soft label has a negative or NaN weight".into()));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("soft label weights sum to {total}")));
        }
        Ok(())
    }

    /// Dense length-K distribution.
    pub fn dense(&self, n_beams: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_beams];
        for (&k, &p) in self.idx.iter().zip(&self.p) {
            out[k] = p;
        }
        out
    }
}

/// Lowest dB value used for zero-gain beams so scores stay finite.
const SCORE_FLOOR_DB: f64 = -300.0;

/// Top-M beams by `s_k = 10·log10 γ_k` (ties to the lower index), weighted
/// by `softmax(s / τ_lbl)` restricted to the support.
pub fn build_soft_label(profile: &SnrProfile, top_m: usize, temperature_db: f64) -> Result<SoftLabel> {
    let k = profile.gains.len();
    if top_m == 0 || top_m > k {
        return Err(Error::validation("label.top_m", format!("M={top_m} must lie in 1..={k}")));
    }
    if !(temperature_db > 0.0) {
        return Err(Error::validation("label.temperature_db", "must be positive"));
    }
    let scores: Vec<f64> = profile
        .gains
        .iter()
        .map(|&g| (10.0 * g.log10()).max(SCORE_FLOOR_DB))
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(top_m);
    let best = scores[order[0]];
    let weights: Vec<f64> = order.iter().map(|&i| ((scores[i] - best) / temperature_db).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(SoftLabel { idx: order, p: weights.into_iter().map(|w| w / total).collect() })
}
