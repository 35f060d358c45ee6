//! Online candidate generation: oversampled reverse chains, count and
//! confidence statistics, composite ranking and probe-set formation.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::d3pm::{sample_x0, CleanPredictor, ContextDenoiser, D3pmModel, DiffusionSchedule, FastDenoiser, OracleDenoiser, Sample, UniformDenoiser};
use crate::encoder::tokenize_history;
use crate::env::{FeedbackConfig, HistoryBuffer, Proposal, Proposer, ProbeRecord, SlotView};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineConfig {
    /// Proposal length S; `None` means `max(P, 8)`.
    pub proposal_len: Option<usize>,
    /// Oversampling factor ν.
    pub oversampling: usize,
    /// Confidence weight λ̄.
    pub confidence_weight: f64,
    /// Standardization stabilizer ε.
    pub std_eps: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig { proposal_len: None, oversampling: 8, confidence_weight: 0.5, std_eps: 1e-6 }
    }
}

impl OnlineConfig {
    pub fn validate(&self, path: &str, probes: usize) -> Result<()> {
        if self.proposal_len.is_some_and(|s| s < probes) {
            return Err(Error::validation(format!("{path}.proposal_len"), "must be at least the probing budget"));
        }
        if self.oversampling == 0 {
            return Err(Error::validation(format!("{path}.oversampling"), "must be at least 1"));
        }
        if !(self.confidence_weight >= 0.0) {
            return Err(Error::validation(format!("{path}.confidence_weight"), "must be nonnegative"));
        }
        if !(self.std_eps > 0.0) {
            return Err(Error::validation(format!("{path}.std_eps"), "must be positive"));
        }
        Ok(())
    }

    pub fn proposal_len(&self, probes: usize) -> usize {
        self.proposal_len.unwrap_or(probes.max(8))
    }
}

/// Number of generated samples `min(K, max(S, ν·S))`.
pub fn generation_count(proposal_len: usize, oversampling: usize, n_beams: usize) -> usize {
    n_beams.min(proposal_len.max(oversampling * proposal_len))
}

/// Per-beam sample counts `u(k)` and confidences `m(k)` (`−∞` if unsampled).
#[derive(Clone, Debug, PartialEq)]
pub struct RankStats {
    pub counts: Vec<usize>,
    pub confidence: Vec<f64>,
}

impl RankStats {
    /// Beams with at least one sample.
    pub fn support(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&k| self.counts[k] > 0).collect()
    }
}

pub fn compute_stats(samples: &[Sample], n_beams: usize) -> RankStats {
    let mut counts = vec![0; n_beams];
    let mut confidence = vec![f64::NEG_INFINITY; n_beams];
    for s in samples {
        counts[s.x0] += 1;
        confidence[s.x0] = confidence[s.x0].max(s.log_prob);
    }
    RankStats { counts, confidence }
}

fn standardize(values: &[f64], eps: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values.iter().map(|v| (v - mean) / (std + eps)).collect()
}

/// Composite scores `r = ũ + λ̄·m̃` over the sampled beams, as
/// `(beam, score)` pairs in beam order.
pub fn composite_scores(stats: &RankStats, confidence_weight: f64, eps: f64) -> Vec<(usize, f64)> {
    let support = stats.support();
    if support.is_empty() {
        return Vec::new();
    }
    let u: Vec<f64> = support.iter().map(|&k| stats.counts[k] as f64).collect();
    let m: Vec<f64> = support.iter().map(|&k| stats.confidence[k]).collect();
    let (u, m) = (standardize(&u, eps), standardize(&m, eps));
    support
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, u[i] + confidence_weight * m[i]))
        .collect()
}

/// Sampled beams by descending composite score (ties to the lower index),
/// truncated to `proposal_len`.
pub fn rank(stats: &RankStats, confidence_weight: f64, eps: f64, proposal_len: usize) -> Vec<usize> {
    let mut scored = composite_scores(stats, confidence_weight, eps);
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(proposal_len).map(|(k, _)| k).collect()
}

/// First `min(P, |S|)` proposals, completed with uniformly random beams not
/// already included.
pub fn form_probe_set(proposals: &[usize], probes: usize, n_beams: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut out: Vec<usize> = proposals.iter().copied().take(probes).collect();
    let mut taken = vec![false; n_beams];
    out.iter().for_each(|&b| taken[b] = true);
    while out.len() < probes.min(n_beams) {
        let free = n_beams - out.len();
        let pick = rng.random_range(0..free);
        let beam = (0..n_beams).filter(|&b| !taken[b]).nth(pick).unwrap();
        taken[beam] = true;
        out.push(beam);
    }
    out
}

/// Where the clean-index distribution comes from.
#[derive(Clone)]
pub enum Generator {
    /// Trained history encoder + denoiser.
    Learned { model: Arc<D3pmModel>, fast: Arc<FastDenoiser> },
    /// Perfect denoiser pointing at the slot's oracle beam (test stub).
    Oracle,
    /// Uniform denoiser (test stub).
    Uniform,
}

/// D3PM-based candidate proposer.
#[derive(Clone)]
pub struct D3pmProposer {
    pub generator: Generator,
    pub schedule: DiffusionSchedule,
    pub online: OnlineConfig,
    pub feedback: FeedbackConfig,
    pub probes: usize,
    pub n_beams: usize,
    name: &'static str,
}

impl D3pmProposer {
    pub fn learned(model: Arc<D3pmModel>, online: &OnlineConfig, feedback: &FeedbackConfig, probes: usize) -> Result<Self> {
        let fast = Arc::new(model.fast_denoiser()?);
        Ok(D3pmProposer {
            schedule: model.schedule.clone(),
            n_beams: model.n_beams(),
            generator: Generator::Learned { model, fast },
            online: online.clone(),
            feedback: feedback.clone(),
            probes,
            name: "d3pm",
        })
    }

    pub fn stub(
        generator: Generator,
        schedule: DiffusionSchedule,
        online: &OnlineConfig,
        feedback: &FeedbackConfig,
        probes: usize,
        n_beams: usize,
    ) -> Self {
        let name = match generator {
            Generator::Learned { .. } => "d3pm",
            Generator::Oracle => "oracle-stub",
            Generator::Uniform => "uniform-stub",
        };
        D3pmProposer { generator, schedule, online: online.clone(), feedback: feedback.clone(), probes, n_beams, name }
    }

    /// The ordered proposal list for one slot.
    pub fn proposals(&self, history: &HistoryBuffer, view: SlotView<'_>, rng: &mut SimRng) -> Result<Vec<usize>> {
        let s = self.online.proposal_len(self.probes);
        let n = generation_count(s, self.online.oversampling, self.n_beams);
        let samples = match &self.generator {
            Generator::Learned { model, fast } => {
                let tokens = tokenize_history(history, &self.feedback, self.probes, self.n_beams)?;
                let context = model.context(&tokens)?;
                let predictor = ContextDenoiser { fast, context_bias: fast.context_bias(&context)? };
                sample_x0(&predictor, &self.schedule, n, rng)
            }
            Generator::Oracle => {
                let p = OracleDenoiser { n_beams: self.n_beams, target: view.profile.oracle };
                sample_x0(&p as &dyn CleanPredictor, &self.schedule, n, rng)
            }
            Generator::Uniform => sample_x0(&UniformDenoiser { n_beams: self.n_beams }, &self.schedule, n, rng),
        };
        let stats = compute_stats(&samples, self.n_beams);
        Ok(rank(&stats, self.online.confidence_weight, self.online.std_eps, s))
    }
}

impl Proposer for D3pmProposer {
    fn name(&self) -> &str {
        self.name
    }

    fn reset(&mut self) {}

    fn propose(&mut self, history: &HistoryBuffer, view: SlotView<'_>, rng: &mut SimRng) -> Result<Proposal> {
        let list = self.proposals(history, view, rng)?;
        let probes = form_probe_set(&list, self.probes, self.n_beams, rng);
        Ok(Proposal { list, probes })
    }

    fn observe(&mut self, _record: &ProbeRecord) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{SnrProfile, TrajectorySlot, UeState};
    use crate::d3pm::ScheduleKind;
    use crate::env::{run_episode, ProbingConfig};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn s(x0: usize, log_prob: f64) -> Sample {
        Sample { x0, log_prob }
    }

    #[test]
    fn generation_count_examples() {
        assert_eq!(generation_count(4, 4, 128), 16);
        assert_eq!(generation_count(4, 64, 128), 128);
        assert_eq!(generation_count(5, 1, 128), 5);
    }

    #[test]
    fn stats_example() {
        let st = compute_stats(&[s(3, -0.2), s(3, -0.5), s(7, -0.1)], 8);
        assert_eq!(st.counts[3], 2);
        assert_eq!(st.counts[7], 1);
        assert_eq!(st.confidence[3], -0.2);
        assert_eq!(st.confidence[7], -0.1);
        assert_eq!(st.confidence[0], f64::NEG_INFINITY);
        assert_eq!(compute_stats(&[s(2, -1.0); 5], 4).support(), vec![2]);
    }

    #[test]
    fn rank_example() {
        let mut samples = vec![s(1, -0.1); 6];
        samples.extend(vec![s(5, -0.5); 2]);
        let st = compute_stats(&samples, 8);
        let scores = composite_scores(&st, 0.5, 1e-6);
        assert_eq!(scores.len(), 2);
        assert!((scores[0].1 - 1.5).abs() < 1e-5 && (scores[1].1 + 1.5).abs() < 1e-5);
        assert_eq!(rank(&st, 0.5, 1e-6, 8), vec![1, 5]);
        let single = compute_stats(&[s(4, -0.3)], 8);
        assert_eq!(rank(&single, 0.5, 1e-6, 8), vec![4]);
    }

    #[test]
    fn probe_set_formation() {
        let mut rng = rng_from_seed(0);
        assert_eq!(form_probe_set(&[5, 2, 9, 1], 3, 10, &mut rng), vec![5, 2, 9]);
        let empty = form_probe_set(&[], 4, 10, &mut rng);
        assert_eq!(empty.len(), 4);
        for _ in 0..10_000 {
            let p = form_probe_set(&[3, 7], 5, 12, &mut rng);
            assert_eq!(&p[..2], &[3, 7]);
            let mut d = p.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 5);
            assert!(p.iter().all(|&b| b < 12));
        }
    }

    fn fake_samples(raw: &[(usize, f64)]) -> Vec<Sample> {
        raw.iter().map(|&(x0, l)| s(x0, l)).collect()
    }

    proptest! {
        #[test]
        fn stats_match_recount(raw in proptest::collection::vec((0usize..10, -5.0f64..0.0), 1..60)) {
            let st = compute_stats(&fake_samples(&raw), 10);
            prop_assert_eq!(st.counts.iter().sum::<usize>(), raw.len());
            for k in 0..10 {
                let hits: Vec<f64> = raw.iter().filter(|r| r.0 == k).map(|r| r.1).collect();
                prop_assert_eq!(st.counts[k], hits.len());
                let best = hits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(st.confidence[k], best);
                prop_assert_eq!(st.confidence[k].is_finite(), st.counts[k] > 0);
            }
        }

        #[test]
        fn ranking_ignores_confidence_shift(raw in proptest::collection::vec((0usize..10, -5.0f64..0.0), 1..60), shift in -3.0f64..3.0) {
            let a = rank(&compute_stats(&fake_samples(&raw), 10), 0.5, 1e-6, 10);
            let shifted: Vec<_> = raw.iter().map(|&(k, l)| (k, l + shift)).collect();
            let b = rank(&compute_stats(&fake_samples(&shifted), 10), 0.5, 1e-6, 10);
            // Shifting confidences changes the standardized values by rounding only.
            let sa = composite_scores(&compute_stats(&fake_samples(&raw), 10), 0.5, 1e-6);
            let gaps_ok = sa.iter().all(|x| sa.iter().all(|y| x.0 == y.0 || (x.1 - y.1).abs() > 1e-9));
            if gaps_ok {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn zero_weight_ranks_by_count(counts in proptest::collection::vec(0usize..20, 10)) {
            let mut raw = Vec::new();
            for (k, &c) in counts.iter().enumerate() {
                raw.extend(std::iter::repeat_n((k, -1.0 - k as f64), c));
            }
            prop_assume!(!raw.is_empty());
            let got = rank(&compute_stats(&fake_samples(&raw), 10), 0.0, 1e-6, 10);
            let mut want: Vec<usize> = (0..10).filter(|&k| counts[k] > 0).collect();
            want.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            prop_assert_eq!(got, want);
        }
    }

    fn static_run(generator: Generator, slots: usize, probes: usize, online: OnlineConfig, seed: u64) -> crate::env::EpisodeLog {
        let k = 32;
        let gains: Vec<f64> = (0..k).map(|b| 10f64.powf(((b * 13) % k) as f64 / 10.0)).collect();
        let profile = SnrProfile::from_gains(gains);
        let traj: Vec<_> = (0..slots)
            .map(|t| TrajectorySlot { t, state: UeState { position: [0.0; 2], velocity: [0.0; 2] }, h: vec![], profile: profile.clone() })
            .collect();
        let probing = ProbingConfig { probes, history: 2, warmup_slots: 16, ..Default::default() };
        let schedule = DiffusionSchedule::build(8, &ScheduleKind::default()).unwrap();
        let mut p = D3pmProposer::stub(generator, schedule, &online, &probing.feedback, probes, k);
        run_episode(0, &traj, &probing, &mut p, &mut rng_from_seed(seed)).unwrap()
    }

    #[test]
    fn oracle_stub_never_misses() {
        let log = static_run(Generator::Oracle, 80, 2, OnlineConfig::default(), 1);
        for s in &log.slots[16..] {
            assert!(s.probes.contains(&s.oracle));
            assert_eq!(s.exec_snr, s.oracle_snr);
            assert_eq!(s.proposals[0], s.oracle);
        }
    }

    #[test]
    fn uniform_stub_misses_at_the_combinatorial_rate() {
        let (probes, k) = (4, 32);
        let online = OnlineConfig { proposal_len: Some(probes), oversampling: 1, ..Default::default() };
        let log = static_run(Generator::Uniform, 4016, probes, online, 2);
        let scored = &log.slots[16..];
        let misses = scored.iter().filter(|s| !s.probes.contains(&s.oracle)).count() as f64;
        let n = scored.len() as f64;
        let q = 1.0 - probes as f64 / k as f64;
        let sd = (n * q * (1.0 - q)).sqrt();
        assert!((misses - n * q).abs() < 3.0 * sd, "misses {misses} vs {}", n * q);
    }
}
