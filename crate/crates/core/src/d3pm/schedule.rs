use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise schedule family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// β_τ linear from `beta_start` to `beta_end`.
    LinearBeta { beta_start: f64, beta_end: f64 },
    /// ᾱ_τ = (ᾱ★)^(τ/T_d): total corruption ᾱ★ spread evenly over the chain.
    Compressed { alpha_bar_star: f64 },
}

impl Default for ScheduleKind {
    fn default() -> Self {
        ScheduleKind::LinearBeta { beta_start: 1e-2, beta_end: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    /// Chain length T_d.
    pub steps: usize,
    pub schedule: ScheduleKind,
    /// Accepted for configuration compatibility; sampling does not rescale
    /// the denoiser output.
    pub temperature: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig { steps: 16, schedule: ScheduleKind::default(), temperature: 1.0 }
    }
}

impl DiffusionConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::validation(format!("{path}.steps"), "must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::validation(format!("{path}.temperature"), "must be positive"));
        }
        DiffusionSchedule::build(self.steps, &self.schedule).map_err(|e| match e {
            Error::Validation { path: p, message } => Error::validation(format!("{path}.schedule.{p}"), message),
            other => other,
        })?;
        Ok(())
    }

    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::build(self.steps, &self.schedule)
    }
}

/// Per-step keep probabilities α_τ and cumulative ᾱ_τ for τ = 1..T_d.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn build(steps: usize, kind: &ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::validation("steps", "chain needs at least one step"));
        }
        let alpha: Vec<f64> = match *kind {
            ScheduleKind::LinearBeta { beta_start, beta_end } => {
                if !(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0) {
                    return Err(Error::validation("beta_start", "need 0 < beta_start <= beta_end < 1"));
                }
                (0..steps)
                    .map(|i| {
                        let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                        1.0 - (beta_start + f * (beta_end - beta_start))
                    })
                    .collect()
            }
            ScheduleKind::Compressed { alpha_bar_star } => {
                if !(alpha_bar_star > 0.0 && alpha_bar_star < 1.0) {
                    return Err(Error::validation("alpha_bar_star", "must lie in (0, 1)"));
                }
                let bar = |tau: usize| alpha_bar_star.powf(tau as f64 / steps as f64);
                (1..=steps).map(|tau| bar(tau) / bar(tau - 1)).collect()
            }
        };
        let mut s = Self::from_alphas_unchecked(alpha);
        if let ScheduleKind::Compressed { alpha_bar_star } = *kind {
            *s.alpha_bar.last_mut().unwrap() = alpha_bar_star;
        }
        Ok(s)
    }

    /// Schedule from raw α values without range checks (degenerate chains in
    /// tests).
    pub fn from_alphas_unchecked(alpha: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for &a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        DiffusionSchedule { alpha, alpha_bar }
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// α_τ for τ ∈ 1..=T_d.
    pub fn alpha(&self, tau: usize) -> f64 {
        self.alpha[tau - 1]
    }

    /// ᾱ_τ for τ ∈ 0..=T_d, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, tau: usize) -> f64 {
        if tau == 0 {
            1.0
        } else {
            self.alpha_bar[tau - 1]
        }
    }

    pub fn terminal_alpha_bar(&self) -> f64 {
        self.alpha_bar(self.steps())
    }
}
