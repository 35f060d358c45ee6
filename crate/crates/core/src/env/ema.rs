use rand::Rng;

use crate::env::history::ProbeRecord;
use crate::rng::SimRng;

/// Per-beam exponential moving average of reported feedback (dB). Beams that
/// are not probed keep their previous score.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaScores {
    pub scores: Vec<f64>,
    pub alpha: f64,
}

impl EmaScores {
    pub fn new(n_beams: usize, alpha: f64, init_db: f64) -> Self {
        EmaScores { scores: vec![init_db; n_beams], alpha }
    }

    pub fn update(&mut self, beam: usize, feedback_db: f64) {
        let s = &mut self.scores[beam];
        *s = (1.0 - self.alpha) * *s + self.alpha * feedback_db;
    }

    pub fn observe(&mut self, record: &ProbeRecord) {
        for (&b, &f) in record.probes.iter().zip(&record.feedback_db) {
            self.update(b, f);
        }
    }

    /// All beams by descending score, ties to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }

    /// Per-position ε-greedy: each of the `P` positions is, with probability
    /// ε, a uniformly random beam not yet chosen, otherwise the best-scored
    /// beam not yet chosen.
    pub fn propose_per_position(&self, probes: usize, epsilon: f64, rng: &mut SimRng) -> Vec<usize> {
        let k = self.scores.len();
        let ranking = self.ranking();
        let mut taken = vec![false; k];
        let mut out = Vec::with_capacity(probes);
        let mut cursor = 0;
        for _ in 0..probes.min(k) {
            let beam = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                let free = k - out.len();
                let pick = rng.random_range(0..free);
                (0..k).filter(|&b| !taken[b]).nth(pick).unwrap()
            } else {
                while taken[ranking[cursor]] {
                    cursor += 1;
                }
                ranking[cursor]
            };
            taken[beam] = true;
            out.push(beam);
        }
        out
    }
}
