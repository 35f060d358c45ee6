//! The probe-then-serve environment: feedback reports, the serving rule,
//! history, warmup sweep, behavior policy, soft labels and trace files.

pub mod ema;
pub mod episode;
pub mod feedback;
pub mod history;
pub mod label;
pub mod trace;

use serde::{Deserialize, Serialize};

pub use ema::EmaScores;
pub use episode::{history_before, run_episode, EpisodeLog, Proposal, Proposer, SlotLog, SlotView};
pub use feedback::{serve, FeedbackConfig, NoiseDomain};
pub use history::{warmup_probes, HistoryBuffer, ProbeRecord};
pub use label::{build_soft_label, LabelConfig, SoftLabel};
pub use trace::{read_trace, write_trace, TraceHeader};

use crate::channel::TrajectorySlot;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    pub alpha: f64,
    /// Per-position exploration probability.
    pub epsilon: f64,
    pub init_db: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig { alpha: 0.3, epsilon: 0.1, init_db: -10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbingConfig {
    /// Probing budget P.
    pub probes: usize,
    /// History length L.
    pub history: usize,
    pub warmup_slots: usize,
    pub feedback: FeedbackConfig,
    pub label: LabelConfig,
    pub behavior: BehaviorConfig,
}

impl Default for ProbingConfig {
    fn default() -> Self {
        ProbingConfig {
            probes: 4,
            history: 4,
            warmup_slots: 32,
            feedback: FeedbackConfig::default(),
            label: LabelConfig::default(),
            behavior: BehaviorConfig::default(),
        }
    }
}

impl ProbingConfig {
    pub fn validate(&self, path: &str, n_beams: usize) -> Result<()> {
        if self.probes == 0 || self.probes > n_beams {
            return Err(Error::validation(format!("{path}.probes"), format!("must lie in 1..={n_beams}")));
        }
        if self.history == 0 {
            return Err(Error::validation(format!("{path}.history"), "must be at least 1"));
        }
        if self.warmup_slots == 0 {
            return Err(Error::validation(format!("{path}.warmup_slots"), "must be at least 1"));
        }
        let b = &self.behavior;
        if !(b.alpha > 0.0 && b.alpha <= 1.0) {
            return Err(Error::validation(format!("{path}.behavior.alpha"), "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&b.epsilon) {
            return Err(Error::validation(format!("{path}.behavior.epsilon"), "must lie in [0, 1]"));
        }
        if !b.init_db.is_finite() {
            return Err(Error::validation(format!("{path}.behavior.init_db"), "must be finite"));
        }
        self.feedback.validate(&format!("{path}.feedback"))?;
        self.label.validate(&format!("{path}.label"), n_beams)
    }
}

/// How an EMA policy explores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Each probe position independently explores with probability ε.
    PerPosition,
    /// With probability ε the whole probe set is a uniform random subset.
    PerSlot,
}

/// ε-greedy EMA tracker. With per-position exploration it is the behavior
/// policy used for data collection; per-slot it is the EMA baseline.
#[derive(Clone, Debug)]
pub struct EmaPolicy {
    pub scores: EmaScores,
    pub epsilon: f64,
    pub init_db: f64,
    pub exploration: Exploration,
    pub probes: usize,
    pub list_len: usize,
    name: &'static str,
}

impl EmaPolicy {
    pub fn behavior(cfg: &BehaviorConfig, n_beams: usize, probes: usize) -> Self {
        EmaPolicy {
            scores: EmaScores::new(n_beams, cfg.alpha, cfg.init_db),
            epsilon: cfg.epsilon,
            init_db: cfg.init_db,
            exploration: Exploration::PerPosition,
            probes,
            list_len: 0,
            name: "behavior",
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn baseline(alpha: f64, epsilon: f64, init_db: f64, n_beams: usize, probes: usize, list_len: usize) -> Self {
        EmaPolicy {
            scores: EmaScores::new(n_beams, alpha, init_db),
            epsilon,
            init_db,
            exploration: Exploration::PerSlot,
            probes,
            list_len,
            name: "ema",
        }
    }
}

impl Proposer for EmaPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn reset(&mut self) {
        self.scores.scores.iter_mut().for_each(|s| *s = self.init_db);
    }

    fn propose(&mut self, _history: &HistoryBuffer, _view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let n_beams = self.scores.scores.len();
        let probes = match self.exploration {
            Exploration::PerPosition => self.scores.propose_per_position(self.probes, self.epsilon, rng),
            Exploration::PerSlot => {
                if self.epsilon > 0.0 && rand::Rng::random::<f64>(rng) < self.epsilon {
                    crate::rng::random_subset(rng, n_beams, self.probes)
                } else {
                    self.scores.propose_per_position(self.probes, 0.0, rng)
                }
            }
        };
        let mut list = self.scores.ranking();
        list.truncate(self.list_len);
        Ok(Proposal { list, probes })
    }

    fn observe(&mut self, record: &ProbeRecord) {
        self.scores.observe(record);
    }
}

/// Offline data collection on one trajectory with the ε-greedy EMA behavior
/// policy. Soft labels come from the full SNR profile.
pub fn run_behavior_episode(
    traj: usize,
    trajectory: &[TrajectorySlot],
    probing: &ProbingConfig,
    rng: &mut SimRng,
) -> Result<EpisodeLog> {
    let n_beams = trajectory.first().map_or(0, |s| s.profile.len());
    let mut policy = EmaPolicy::behavior(&probing.behavior, n_beams, probing.probes);
    run_episode(traj, trajectory, probing, &mut policy, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_trajectory, ChannelConfig, ChannelModel, Scene, SnrProfile, UeState};
    use crate::rng::rng_from_seed;

    fn desk_trajectory(seed: u64, slots: usize) -> Vec<TrajectorySlot> {
        let cfg = ChannelConfig { n_antennas: 16, n_beams: 32, ..Default::default() };
        let scene = Scene::generate(&cfg.scene, &mut rng_from_seed(seed));
        let model = ChannelModel::new(&cfg, scene).unwrap();
        generate_trajectory(&model, &cfg.mobility, slots, cfg.slot_s, &mut rng_from_seed(seed + 1))
    }

    fn static_trajectory(gains: Vec<f64>, slots: usize) -> Vec<TrajectorySlot> {
        let profile = SnrProfile::from_gains(gains);
        (0..slots)
            .map(|t| TrajectorySlot {
                t,
                state: UeState { position: [0.0, 0.0], velocity: [0.0, 0.0] },
                h: Vec::new(),
                profile: profile.clone(),
            })
            .collect()
    }

    #[test]
    fn static_channel_locks_onto_oracle() {
        let gains: Vec<f64> = (0..16).map(|k| 10f64.powf(((k * 7) % 16) as f64 / 3.0)).collect();
        let traj = static_trajectory(gains, 60);
        let cfg = ProbingConfig {
            probes: 2,
            warmup_slots: 8,
            feedback: FeedbackConfig { levels: 1 << 20, ..Default::default() },
            behavior: BehaviorConfig { epsilon: 0.0, ..Default::default() },
            ..Default::default()
        };
        let log = run_behavior_episode(0, &traj, &cfg, &mut rng_from_seed(0)).unwrap();
        for s in &log.slots[8..] {
            assert!(s.probes.contains(&s.oracle));
            assert_eq!(s.exec_snr, s.oracle_snr);
        }
    }

    #[test]
    fn behavior_episodes_are_valid_and_deterministic() {
        let traj = desk_trajectory(3, 120);
        let cfg = ProbingConfig { probes: 2, history: 2, ..Default::default() };
        let a = run_behavior_episode(5, &traj, &cfg, &mut rng_from_seed(9)).unwrap();
        let b = run_behavior_episode(5, &traj, &cfg, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        a.validate(32, 2).unwrap();
        assert_eq!(a.slots.len(), 120);
        assert_eq!(a.slots[0].probes, vec![0, 1]);
        assert_eq!(a.slots[15].probes, vec![30, 31]);
    }

    #[test]
    fn trace_round_trip_is_byte_stable() {
        let traj = desk_trajectory(4, 50);
        let cfg = ProbingConfig { probes: 2, history: 2, ..Default::default() };
        let eps: Vec<_> = (0..2)
            .map(|i| run_behavior_episode(i, &traj, &cfg, &mut rng_from_seed(i as u64)).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let header = TraceHeader::new(7, serde_json::to_value(&cfg).unwrap());
        write_trace(&path, &header, &eps).unwrap();
        let (h, back) = read_trace(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(back.len(), 2);
        for (x, y) in eps.iter().zip(&back) {
            assert_eq!(x.slots.len(), y.slots.len());
            for (s, r) in x.slots.iter().zip(&y.slots) {
                assert_eq!(s.record(), r.record());
                assert_eq!(s.label, r.label);
                r.label.validate(32).unwrap();
            }
        }
        let again = dir.path().join("u.jsonl");
        write_trace(&again, &h, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        let first = std::fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().nth(1).unwrap()).unwrap();
        for key in ["traj", "t", "probes", "fb_db", "served", "exec_snr", "oracle", "oracle_snr", "label"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn history_reconstruction_matches_live_buffer() {
        let traj = desk_trajectory(5, 40);
        let cfg = ProbingConfig { probes: 2, history: 3, ..Default::default() };
        let log = run_behavior_episode(0, &traj, &cfg, &mut rng_from_seed(1)).unwrap();
        let h = history_before(&log, 10, 3);
        let ts: Vec<_> = h.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![7, 8, 9]);
        assert_eq!(history_before(&log, 1, 3).len(), 1);
    }

    #[test]
    fn validation_paths() {
        let cfg = ProbingConfig { probes: 40, ..Default::default() };
        match cfg.validate("probing", 32).unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "probing.probes"),
            e => panic!("{e}"),
        }
        let cfg = ProbingConfig { feedback: FeedbackConfig { levels: 1, ..Default::default() }, ..Default::default() };
        match cfg.validate("probing", 32).unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "probing.feedback.levels"),
            e => panic!("{e}"),
        }
    }
}
