use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::{evaluate, train_models, Experiment, ProposerKind, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Probing budget P.
    Probes,
    /// History length L.
    History,
    /// Quantization levels Q.
    Levels,
    /// Feedback noise standard deviation σ_v (dB).
    NoiseStd,
    /// Diffusion steps T_d.
    DiffusionSteps,
    /// Soft-label support M.
    TopM,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Probes => "probes",
            SweepAxis::History => "history",
            SweepAxis::Levels => "levels",
            SweepAxis::NoiseStd => "noise_std",
            SweepAxis::DiffusionSteps => "diffusion_steps",
            SweepAxis::TopM => "top_m",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let integer = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::validation(format!("values ({})", self.name()), format!("{value} is not a nonnegative integer")))
            }
        };
        match self {
            SweepAxis::Probes => cfg.probing.probes = integer()?,
            SweepAxis::History => cfg.probing.history = integer()?,
            SweepAxis::Levels => cfg.probing.feedback.levels = integer()?,
            SweepAxis::NoiseStd => cfg.probing.feedback.noise_std = value,
            SweepAxis::DiffusionSteps => cfg.diffusion.steps = integer()?,
            SweepAxis::TopM => cfg.probing.label.top_m = integer()?,
        }
        Ok(())
    }
}

fn default_proposers() -> Vec<String> {
    ProposerKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_proposers")]
    pub proposers: Vec<String>,
    #[serde(default)]
    pub base: ExperimentConfig,
}

impl SweepSpec {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: SweepSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Validation {
            path: format!("{}: {}", origin.display(), e.path()),
            message: e.into_inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::validation("values", "sweep grid is empty"));
        }
        self.kinds()?;
        self.base.validate().map_err(|e| match e {
            Error::Validation { path, message } => Error::validation(format!("base.{path}"), message),
            other => other,
        })
    }

    pub fn kinds(&self) -> Result<Vec<ProposerKind>> {
        if self.proposers.is_empty() {
            return Err(Error::validation("proposers", "must name at least one proposer"));
        }
        self.proposers.iter().map(|p| p.parse()).collect()
    }
}

/// One long-format output row. Failed grid points carry `metric = "failed"`
/// and the error in `note`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub proposer: String,
    pub seed: String,
    pub metric: String,
    pub result: f64,
    pub note: String,
}

fn run_point(spec: &SweepSpec, kinds: &[ProposerKind], value: f64, timing: bool) -> Result<Vec<SweepRow>> {
    let mut cfg = spec.base.clone();
    spec.axis.apply(&mut cfg, value)?;
    let exp = Experiment::new(cfg)?;
    let cfg = &exp.config;
    let want_d3pm = kinds.contains(&ProposerKind::D3pm);
    let want_trm = kinds.contains(&ProposerKind::Trm);
    let start = Instant::now();
    let models = if want_d3pm || want_trm {
        let logs = exp.collect(Split::Train)?;
        train_models(cfg, &logs, want_d3pm, want_trm)?.0
    } else {
        Default::default()
    };
    let train_s = start.elapsed().as_secs_f64();
    let trajectories = exp.trajectories(Split::Eval);
    let row = |proposer: &str, seed: String, metric: &str, result: f64| SweepRow {
        axis: spec.axis.name().into(),
        value,
        proposer: proposer.into(),
        seed,
        metric: metric.into(),
        result,
        note: String::new(),
    };
    let mut rows = vec![row("*", "-".into(), "train_seconds", train_s)];
    for &kind in kinds {
        let outcomes = evaluate(&exp, &trajectories, kind, &models, cfg.eval.seeds, !timing)?;
        for o in &outcomes {
            for (metric, v) in o.report.entries() {
                rows.push(row(kind.name(), o.seed.to_string(), &metric, v));
            }
            rows.push(row(kind.name(), o.seed.to_string(), "infer_ms_per_slot", 1e3 * o.seconds_per_slot));
        }
    }
    Ok(rows)
}

/// Evaluates every proposer at every grid value. A failing grid point is
/// recorded and the sweep continues. The diffusion-steps axis runs
/// single-threaded so its inference timings are not disturbed.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let kinds = spec.kinds()?;
    let timing = spec.axis == SweepAxis::DiffusionSteps;
    let point = |&value: &f64| {
        run_point(spec, &kinds, value, timing).unwrap_or_else(|e| {
            vec![SweepRow {
                axis: spec.axis.name().into(),
                value,
                proposer: "*".into(),
                seed: "-".into(),
                metric: "failed".into(),
                result: f64::NAN,
                note: e.to_string(),
            }]
        })
    };
    let per_point: Vec<Vec<SweepRow>> =
        if timing { spec.values.iter().map(point).collect() } else { spec.values.par_iter().map(point).collect() };
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean of `metric` for `proposer` at each grid value, in grid order.
pub fn seed_means(rows: &[SweepRow], proposer: &str, metric: &str) -> Vec<(f64, f64)> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    values
        .into_iter()
        .filter_map(|v| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.value == v && r.proposer == proposer && r.metric == metric)
                .map(|r| r.result)
                .collect();
            (!xs.is_empty()).then(|| (v, xs.iter().sum::<f64>() / xs.len() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        c.data.eval_trajectories = 2;
        c.data.scoring_slots = 50;
        c
    }

    #[test]
    fn spec_parsing_and_validation() {
        let spec = SweepSpec::from_json(r#"{"axis": "probes", "values": [1, 2]}"#, Path::new("s.json")).unwrap();
        assert_eq!(spec.proposers.len(), 6);
        let err = SweepSpec::from_json(r#"{"axis": "probes", "values": []}"#, Path::new("s.json")).unwrap_err();
        assert!(err.to_string().contains("values"));
        let err = SweepSpec::from_json(r#"{"axis": "speed", "values": [1]}"#, Path::new("s.json")).unwrap_err();
        assert!(err.to_string().contains("axis"), "{err}");
        let err =
            SweepSpec::from_json(r#"{"axis": "probes", "values": [1], "proposers": ["ppo"]}"#, Path::new("s.json"))
                .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn failing_points_are_recorded_and_the_sweep_continues() {
        let spec = SweepSpec {
            axis: SweepAxis::Probes,
            values: vec![2.0, 40.0, 1.5],
            proposers: vec!["random-stub".into(), "ema".into()],
            base: base(),
        };
        let rows = run_sweep(&spec).unwrap();
        let failed: Vec<_> = rows.iter().filter(|r| r.metric == "failed").collect();
        assert_eq!(failed.len(), 2);
        assert!(failed.iter().all(|r| !r.note.is_empty()));
        let p = seed_means(&rows, "random-stub", "p_miss");
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].0, 2.0);
    }

    #[test]
    fn wider_budget_lowers_the_miss_rate() {
        let spec = SweepSpec {
            axis: SweepAxis::Probes,
            values: vec![1.0, 8.0],
            proposers: vec!["ema".into(), "ucb".into(), "random-stub".into()],
            base: base(),
        };
        let rows = run_sweep(&spec).unwrap();
        for p in ["ucb", "random-stub"] {
            let m = seed_means(&rows, p, "p_miss");
            assert!(m[1].1 < m[0].1, "{p}: {m:?}");
        }
        let g = seed_means(&rows, "random-stub", "oracle_gap_db");
        assert!(g[1].1 < g[0].1, "{g:?}");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("axis,value,proposer,seed,metric,result,note\n"));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }
}
