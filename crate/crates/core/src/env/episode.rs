use serde::{Deserialize, Serialize};

use crate::channel::{SnrProfile, TrajectorySlot};
use crate::env::feedback::serve;
use crate::env::history::{warmup_probes, HistoryBuffer, ProbeRecord};
use crate::env::label::{build_soft_label, SoftLabel};
use crate::env::ProbingConfig;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Ground truth for the current slot. Only test stubs may look at it; real
/// proposers see the history alone.
#[derive(Clone, Copy, Debug)]
pub struct SlotView<'a> {
    pub t: usize,
    pub profile: &'a SnrProfile,
}

/// A proposer's output for one slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Proposal {
    /// Ordered proposal list `S_t` (may be empty for proposers without one).
    pub list: Vec<usize>,
    /// Probe set `P_t`: exactly `P` distinct beams.
    pub probes: Vec<usize>,
}

/// Shared online interface for every candidate proposer.
pub trait Proposer {
    fn name(&self) -> &str;

    /// Clears per-episode state.
    fn reset(&mut self);

    fn propose(&mut self, history: &HistoryBuffer, view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal>;

    /// Called after every slot, warmup included.
    fn observe(&mut self, record: &ProbeRecord);
}

/// One logged slot; field names follow the trace file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotLog {
    pub traj: usize,
    pub t: usize,
    pub probes: Vec<usize>,
    pub fb_db: Vec<f64>,
    pub served: usize,
    pub exec_snr: f64,
    pub oracle: usize,
    pub oracle_snr: f64,
    pub label: SoftLabel,
    /// Ordered proposal list, present for online episodes after warmup.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposals: Vec<usize>,
    /// Linear SNR of every probed beam, aligned with `probes`. Kept in
    /// memory for metrics, not written to traces.
    #[serde(skip)]
    pub probe_snr: Vec<f64>,
}

impl SlotLog {
    pub fn record(&self) -> ProbeRecord {
        ProbeRecord {
            t: self.t,
            probes: self.probes.clone(),
            feedback_db: self.fb_db.clone(),
            served: self.served,
            executed_snr: self.exec_snr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub traj: usize,
    pub slots: Vec<SlotLog>,
}

impl EpisodeLog {
    /// Checks contiguity, probe-set validity and oracle dominance.
    pub fn validate(&self, n_beams: usize, probes: usize) -> Result<()> {
        for (i, s) in self.slots.iter().enumerate() {
            let at = |m: String| Error::Contract(format!("trajectory {} slot {}: {m}", self.traj, s.t));
            if s.traj != self.traj || (i > 0 && s.t != self.slots[i - 1].t + 1) {
                return Err(at("slots are not contiguous".into()));
            }
            if s.probes.len() != probes || s.fb_db.len() != probes {
                return Err(at(format!("expected {probes} probes")));
            }
            for (j, &b) in s.probes.iter().enumerate() {
                if b >= n_beams || s.probes[..j].contains(&b) {
                    return Err(at(format!("probe {b} repeated or out of range")));
                }
            }
            if !s.probes.contains(&s.served) {
                return Err(at("served beam was not probed".into()));
            }
            if s.exec_snr > s.oracle_snr {
                return Err(at("executed SNR exceeds oracle SNR".into()));
            }
            s.label.validate(n_beams).map_err(|e| at(e.to_string()))?;
        }
        Ok(())
    }
}

/// Probe-then-serve loop over one trajectory: the round-robin warmup sweep
/// for the first `warmup_slots` slots, then the proposer's probe sets. The
/// proposer observes every slot's record.
pub fn run_episode(
    traj: usize,
    trajectory: &[TrajectorySlot],
    probing: &ProbingConfig,
    proposer: &mut dyn Proposer,
    rng: &mut SimRng,
) -> Result<EpisodeLog> {
    let n_beams = trajectory.first().map_or(0, |s| s.profile.len());
    if trajectory.len() < probing.warmup_slots {
        return Err(Error::Contract(format!(
            "trajectory has {} slots, warmup needs {}",
            trajectory.len(),
            probing.warmup_slots
        )));
    }
    proposer.reset();
    let mut history = HistoryBuffer::new(probing.history);
    let mut slots = Vec::with_capacity(trajectory.len());
    for (t, slot) in trajectory.iter().enumerate() {
        let profile = &slot.profile;
        let proposal = if t < probing.warmup_slots {
            Proposal { list: Vec::new(), probes: warmup_probes(t, probing.probes, n_beams) }
        } else {
            proposer.propose(&history, SlotView { t, profile }, rng)?
        };
        check_probe_set(&proposal.probes, probing.probes, n_beams, proposer.name())?;
        let fb_db: Vec<f64> = proposal
            .probes
            .iter()
            .map(|&b| probing.feedback.report(profile.gains[b], rng))
            .collect();
        let (served, exec_snr) = serve(&proposal.probes, &fb_db, profile)?;
        let label = build_soft_label(profile, probing.label.top_m, probing.label.temperature_db)?;
        let log = SlotLog {
            traj,
            t,
            probe_snr: proposal.probes.iter().map(|&b| profile.gains[b]).collect(),
            probes: proposal.probes,
            fb_db,
            served,
            exec_snr,
            oracle: profile.oracle,
            oracle_snr: profile.oracle_snr,
            label,
            proposals: proposal.list,
        };
        let record = log.record();
        proposer.observe(&record);
        history.push(record);
        slots.push(log);
    }
    Ok(EpisodeLog { traj, slots })
}

fn check_probe_set(probes: &[usize], expected: usize, n_beams: usize, who: &str) -> Result<()> {
    let distinct = probes.iter().enumerate().all(|(i, b)| !probes[..i].contains(b));
    if probes.len() != expected || !distinct || probes.iter().any(|&b| b >= n_beams) {
        return Err(Error::Contract(format!(
            "{who} produced an invalid probe set {probes:?} (need {expected} distinct beams below {n_beams})"
        )));
    }
    Ok(())
}

/// Rebuilds the history buffer a proposer would see right before slot `t`.
pub fn history_before(log: &EpisodeLog, t: usize, capacity: usize) -> HistoryBuffer {
    let end = log.slots.iter().position(|s| s.t == t).unwrap_or(log.slots.len());
    let start = end.saturating_sub(capacity);
    HistoryBuffer::from_records(capacity, log.slots[start..end].iter().map(SlotLog::record))
}
