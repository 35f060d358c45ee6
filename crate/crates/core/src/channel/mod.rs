//! Codebook, synthetic multipath scene, mobility and per-beam SNR profiles.

pub mod codebook;
pub mod grid;
pub mod mobility;
pub mod profile;
pub mod scene;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use codebook::{beam_spatial_frequency, inner, steering_vector, Codebook};
pub use grid::ChannelGrid;
pub use mobility::{step_mobility, MobilityConfig, UeState};
pub use profile::{argmax_first, snr_profile, SnrProfile};
pub use scene::{noise_power, Scatterer, ScatterLoss, Scene, SceneConfig};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub tx_power_w: f64,
    pub noise_temp_k: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig { tx_power_w: 1.0, noise_temp_k: 290.0, bandwidth_hz: 20e6, noise_figure_db: 7.0 }
    }
}

impl RadioConfig {
    pub fn noise_power(&self) -> f64 {
        noise_power(self.noise_temp_k, self.bandwidth_hz, self.noise_figure_db)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_antennas: usize,
    pub n_beams: usize,
    /// Slot duration Δt in seconds.
    pub slot_s: f64,
    pub scene: SceneConfig,
    pub radio: RadioConfig,
    pub mobility: MobilityConfig,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            n_antennas: 32,
            n_beams: 128,
            slot_s: 0.04,
            scene: SceneConfig::default(),
            radio: RadioConfig::default(),
            mobility: MobilityConfig::default(),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.n_antennas == 0 {
            return Err(Error::validation(format!("{path}.n_antennas"), "must be at least 1"));
        }
        if self.n_beams < 2 {
            return Err(Error::validation(format!("{path}.n_beams"), "must be at least 2"));
        }
        if !(self.slot_s > 0.0) {
            return Err(Error::validation(format!("{path}.slot_s"), "must be positive"));
        }
        let r = &self.radio;
        for (name, v) in [("tx_power_w", r.tx_power_w), ("noise_temp_k", r.noise_temp_k), ("bandwidth_hz", r.bandwidth_hz)] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{path}.radio.{name}"), "must be positive"));
            }
        }
        self.scene.validate(&format!("{path}.scene"))?;
        self.mobility.validate(&format!("{path}.mobility"))
    }
}

/// Everything needed to turn a UE position into an SNR profile.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub scene: Scene,
    pub codebook: Codebook,
    pub tx_power: f64,
    pub noise_power: f64,
    /// When present, channels come from nearest-grid-point lookup instead
    /// of the synthetic scene.
    pub grid: Option<ChannelGrid>,
}

impl ChannelModel {
    pub fn new(cfg: &ChannelConfig, scene: Scene) -> Result<Self> {
        Ok(ChannelModel {
            scene,
            codebook: Codebook::dft(cfg.n_antennas, cfg.n_beams)?,
            tx_power: cfg.radio.tx_power_w,
            noise_power: cfg.radio.noise_power(),
            grid: None,
        })
    }

    pub fn with_grid(mut self, grid: ChannelGrid) -> Result<Self> {
        if grid.n_antennas != self.codebook.n_antennas() {
            return Err(Error::Config(format!(
                "channel grid has {} antennas, codebook expects {}",
                grid.n_antennas,
                self.codebook.n_antennas()
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn channel(&self, position: [f64; 2]) -> Vec<Complex64> {
        match &self.grid {
            Some(g) => g.nearest(position).to_vec(),
            None => self.scene.synth_channel(self.codebook.n_antennas(), position),
        }
    }

    pub fn profile(&self, h: &[Complex64]) -> SnrProfile {
        snr_profile(h, &self.codebook, self.tx_power, self.noise_power)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectorySlot {
    pub t: usize,
    pub state: UeState,
    pub h: Vec<Complex64>,
    pub profile: SnrProfile,
}

/// `T` slots of UE motion starting from a random initial state, with the
/// channel and SNR profile at every position. The first slot is the initial
/// state; each later one follows a mobility step.
pub fn generate_trajectory(
    model: &ChannelModel,
    mobility: &MobilityConfig,
    n_slots: usize,
    dt: f64,
    rng: &mut SimRng,
) -> Vec<TrajectorySlot> {
    let mut state = mobility.initial_state(dt, rng);
    let mut out = Vec::with_capacity(n_slots);
    for t in 0..n_slots {
        if t > 0 {
            state = step_mobility(&state, dt, rng, mobility);
        }
        let h = model.channel(state.position);
        let profile = model.profile(&h);
        out.push(TrajectorySlot { t, state, h, profile });
    }
    out
}

/// `|⟨a, b⟩| / (‖a‖‖b‖)`.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let na: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    inner(a, b).norm() / (na * nb)
}
