use serde::Serialize;

use crate::env::EpisodeLog;
use crate::error::{Error, Result};

/// Scoring-window metrics for one proposer and one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub slots: usize,
    /// `10·log10` of the mean linear executed SNR.
    pub exec_snr_db: f64,
    pub oracle_snr_db: f64,
    /// `oracle_snr_db − exec_snr_db`.
    pub oracle_gap_db: f64,
    pub p_miss: f64,
    /// Mean linear shortfall of the best probed beam on miss slots; absent
    /// when no miss occurred.
    pub r_probe: Option<f64>,
    /// `(m, coverage_m)`.
    pub coverage: Vec<(usize, f64)>,
    pub misses: usize,
}

fn db(x: f64) -> f64 {
    10.0 * x.max(1e-30).log10()
}

/// Metrics over the slots with `t ≥ warmup`. R_probe needs the per-probe
/// SNRs kept in memory by the episode runner.
pub fn compute_metrics(logs: &[EpisodeLog], warmup: usize, m_list: &[usize]) -> Result<MetricsReport> {
    let mut n = 0usize;
    let (mut exec, mut oracle) = (0.0, 0.0);
    let mut misses = 0usize;
    let mut regret = 0.0;
    let mut hits = vec![0usize; m_list.len()];
    for ep in logs {
        for s in ep.slots.iter().filter(|s| s.t >= warmup) {
            n += 1;
            exec += s.exec_snr;
            oracle += s.oracle_snr;
            if !s.probes.contains(&s.oracle) {
                misses += 1;
                if s.probe_snr.len() != s.probes.len() {
                    return Err(Error::Contract(format!(
                        "trajectory {} slot {} lacks per-probe SNRs",
                        s.traj, s.t
                    )));
                }
                let best = s.probe_snr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                regret += s.oracle_snr - best;
            }
            for (h, &m) in hits.iter_mut().zip(m_list) {
                if s.proposals.iter().take(m).any(|&b| b == s.oracle) {
                    *h += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::validation("logs", "scoring window is empty"));
    }
    let nf = n as f64;
    let (exec_snr_db, oracle_snr_db) = (db(exec / nf), db(oracle / nf));
    Ok(MetricsReport {
        slots: n,
        exec_snr_db,
        oracle_snr_db,
        oracle_gap_db: oracle_snr_db - exec_snr_db,
        p_miss: misses as f64 / nf,
        r_probe: (misses > 0).then(|| regret / misses as f64),
        coverage: m_list.iter().zip(&hits).map(|(&m, &h)| (m, h as f64 / nf)).collect(),
        misses,
    })
}

impl MetricsReport {
    /// Flat `(metric, value)` pairs; an absent R_probe is omitted.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("exec_snr_db".to_string(), self.exec_snr_db),
            ("oracle_snr_db".to_string(), self.oracle_snr_db),
            ("oracle_gap_db".to_string(), self.oracle_gap_db),
            ("p_miss".to_string(), self.p_miss),
        ];
        if let Some(r) = self.r_probe {
            out.push(("r_probe".to_string(), r));
        }
        out.extend(self.coverage.iter().map(|&(m, c)| (format!("top{m}_coverage"), c)));
        out
    }
}

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(reports: &[MetricsReport]) -> Vec<Summary> {
    let mut names: Vec<String> = Vec::new();
    for r in reports {
        for (name, _) in r.entries() {
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.entries().into_iter().find(|(n, _)| *n == name).map(|e| e.1))
                .collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            Summary { metric: name, mean, std, n }
        })
        .collect()
}
