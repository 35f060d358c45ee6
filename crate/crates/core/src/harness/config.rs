use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselinesConfig;
use crate::channel::ChannelConfig;
use crate::d3pm::{DiffusionConfig, ScheduleKind};
use crate::encoder::EncoderConfig;
use crate::env::ProbingConfig;
use crate::error::{Error, Result};
use crate::ranking::OnlineConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_trajectories: usize,
    pub eval_trajectories: usize,
    /// Scored slots per trajectory; each trajectory runs warmup + this many.
    pub scoring_slots: usize,
    /// Optional channel grid file replacing the synthetic scene.
    pub channel_grid: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train_trajectories: 8, eval_trajectories: 4, scoring_slots: 200, channel_grid: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: usize,
    /// List prefixes used for Top-m coverage.
    pub coverage: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seeds: 3, coverage: vec![1, 2, 4] }
    }
}

/// One experiment: every module configuration plus seeds and data sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub channel: ChannelConfig,
    pub probing: ProbingConfig,
    pub encoder: EncoderConfig,
    pub diffusion: DiffusionConfig,
    pub training: TrainConfig,
    pub online: OnlineConfig,
    pub baselines: BaselinesConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Laptop-scale profile: K=32, P=2, L=2, d=64, T_d=8.
    pub fn desk() -> Self {
        let channel = ChannelConfig { n_antennas: 16, n_beams: 32, ..Default::default() };
        let probing = ProbingConfig { probes: 2, history: 2, ..Default::default() };
        ExperimentConfig {
            seed: 7,
            channel,
            probing,
            encoder: EncoderConfig { dim: 64, ..Default::default() },
            diffusion: DiffusionConfig {
                steps: 8,
                schedule: ScheduleKind::Compressed { alpha_bar_star: 0.15 },
                ..Default::default()
            },
            training: TrainConfig::default(),
            online: OnlineConfig::default(),
            baselines: BaselinesConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Full-size profile: N_t=32, K=128, P=L=4, d=256, T_d=16, 60/20
    /// trajectories of 800 scored slots.
    pub fn full() -> Self {
        ExperimentConfig {
            seed: 7,
            channel: ChannelConfig::default(),
            probing: ProbingConfig::default(),
            encoder: EncoderConfig::default(),
            diffusion: DiffusionConfig::default(),
            training: TrainConfig::default(),
            online: OnlineConfig::default(),
            baselines: BaselinesConfig::default(),
            data: DataConfig { train_trajectories: 60, eval_trajectories: 20, scoring_slots: 800, channel_grid: None },
            eval: EvalConfig::default(),
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Validation { path: format!("{}: {path}", origin.display()), message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_beams(&self) -> usize {
        self.channel.n_beams
    }

    pub fn trajectory_slots(&self) -> usize {
        self.probing.warmup_slots + self.data.scoring_slots
    }

    pub fn proposal_len(&self) -> usize {
        self.online.proposal_len(self.probing.probes)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate("channel")?;
        let k = self.n_beams();
        self.probing.validate("probing", k)?;
        self.encoder.validate("encoder")?;
        self.diffusion.validate("diffusion")?;
        self.training.validate("training")?;
        self.online.validate("online", self.probing.probes)?;
        if self.proposal_len() > k {
            return Err(Error::validation("online.proposal_len", "cannot exceed the codebook size"));
        }
        self.baselines.validate("baselines")?;
        let d = &self.data;
        if d.train_trajectories == 0 {
            return Err(Error::validation("data.train_trajectories", "must be positive"));
        }
        if d.eval_trajectories == 0 {
            return Err(Error::validation("data.eval_trajectories", "must be positive"));
        }
        if d.scoring_slots == 0 {
            return Err(Error::validation("data.scoring_slots", "must be positive"));
        }
        if self.eval.seeds == 0 {
            return Err(Error::validation("eval.seeds", "must be positive"));
        }
        if self.eval.coverage.contains(&0) {
            return Err(Error::validation("eval.coverage", "prefix lengths must be positive"));
        }
        Ok(())
    }
}
