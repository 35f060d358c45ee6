use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::codebook::steering_vector;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Distances below this are clamped (UE on top of the BS or a scatterer).
pub const MIN_DISTANCE_M: f64 = 1.0;

/// How a scattered path's amplitude decays with geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterLoss {
    /// `ρ · (d₁ + d₂)^(−η/2)`: free-space loss over the unfolded path length.
    PathLength,
    /// `ρ · (d₁ · d₂)^(−η/2)`: two-leg product (radar-style) loss.
    Bistatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub carrier_hz: f64,
    pub n_scatterers: usize,
    /// Inner and outer radius (m) of the annulus scatterers are drawn from.
    pub annulus_m: [f64; 2],
    /// Range of reflectivity magnitudes; phases are uniform.
    pub reflectivity: [f64; 2],
    pub los: bool,
    pub path_loss_exponent: f64,
    pub scatter_loss: ScatterLoss,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            carrier_hz: 28e9,
            n_scatterers: 40,
            annulus_m: [20.0, 80.0],
            reflectivity: [0.05, 0.3],
            los: true,
            path_loss_exponent: 2.0,
            scatter_loss: ScatterLoss::Bistatic,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let at = |f: &str| format!("{path}.{f}");
        if !(self.carrier_hz > 0.0) {
            return Err(Error::validation(at("carrier_hz"), "must be positive"));
        }
        let [lo, hi] = self.annulus_m;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::validation(at("annulus_m"), "need 0 < inner <= outer"));
        }
        let [rlo, rhi] = self.reflectivity;
        if !(0.0 <= rlo && rlo <= rhi && rhi <= 1.0) {
            return Err(Error::validation(at("reflectivity"), "need 0 <= lo <= hi <= 1"));
        }
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::validation(at("path_loss_exponent"), "must be positive"));
        }
        if !self.los && self.n_scatterers == 0 {
            return Err(Error::validation(at("n_scatterers"), "scene without LoS needs scatterers"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 2],
    pub reflectivity: Complex64,
}

/// Static propagation environment around a BS at the origin. The ULA lies
/// along the y-axis, so a point at `(x, y)` sits at spatial frequency
/// `u = y / ‖(x, y)‖` from the array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    pub los: bool,
    pub wavelength: f64,
    pub path_loss_exponent: f64,
    pub scatter_loss: ScatterLoss,
}

fn norm2(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm2([a[0] - b[0], a[1] - b[1]])
}

fn spatial_frequency(p: [f64; 2]) -> f64 {
    let r = norm2(p);
    if r == 0.0 {
        0.0
    } else {
        p[1] / r
    }
}

impl Scene {
    /// Scatterers uniform by area in the configured annulus with uniform
    /// reflectivity magnitude and uniform phase.
    pub fn generate(cfg: &SceneConfig, rng: &mut SimRng) -> Self {
        let [r_in, r_out] = cfg.annulus_m;
        let [m_lo, m_hi] = cfg.reflectivity;
        let scatterers = (0..cfg.n_scatterers)
            .map(|_| {
                let r = (r_in * r_in + rng.random::<f64>() * (r_out * r_out - r_in * r_in)).sqrt();
                let angle = rng.random::<f64>() * 2.0 * PI;
                let mag = m_lo + rng.random::<f64>() * (m_hi - m_lo);
                let phase = rng.random::<f64>() * 2.0 * PI;
                Scatterer {
                    position: [r * angle.cos(), r * angle.sin()],
                    reflectivity: Complex64::from_polar(mag, phase),
                }
            })
            .collect();
        Scene {
            scatterers,
            los: cfg.los,
            wavelength: cfg.wavelength(),
            path_loss_exponent: cfg.path_loss_exponent,
            scatter_loss: cfg.scatter_loss,
        }
    }

    /// Line-of-sight only scene (no scatterers).
    pub fn los_only(cfg: &SceneConfig) -> Self {
        Scene {
            scatterers: Vec::new(),
            los: true,
            wavelength: cfg.wavelength(),
            path_loss_exponent: cfg.path_loss_exponent,
            scatter_loss: cfg.scatter_loss,
        }
    }

    /// Free-space reference amplitude `λ / 4π` at 1 m.
    pub fn reference_amplitude(&self) -> f64 {
        self.wavelength / (4.0 * PI)
    }

    /// Narrowband channel at `ue`: LoS plus one specular path per scatterer,
    /// each a steering vector toward its departure direction with amplitude
    /// from the configured loss model and phase `−2π · length / λ`.
    pub fn synth_channel(&self, n_antennas: usize, ue: [f64; 2]) -> Vec<Complex64> {
        let half_eta = self.path_loss_exponent / 2.0;
        let g0 = self.reference_amplitude();
        let mut h = vec![Complex64::new(0.0, 0.0); n_antennas];
        let mut add_path = |gain: Complex64, length: f64, u: f64| {
            let phase = Complex64::from_polar(1.0, -2.0 * PI * length / self.wavelength);
            let coeff = gain * phase;
            for (hn, a) in h.iter_mut().zip(steering_vector(n_antennas, u)) {
                *hn += coeff * a;
            }
        };
        if self.los {
            let d = norm2(ue).max(MIN_DISTANCE_M);
            add_path(Complex64::new(g0 * d.powf(-half_eta), 0.0), d, spatial_frequency(ue));
        }
        for s in &self.scatterers {
            let d1 = norm2(s.position).max(MIN_DISTANCE_M);
            let d2 = dist(s.position, ue).max(MIN_DISTANCE_M);
            let loss = match self.scatter_loss {
                ScatterLoss::PathLength => (d1 + d2).powf(-half_eta),
                ScatterLoss::Bistatic => (d1 * d2).powf(-half_eta),
            };
            add_path(s.reflectivity * g0 * loss, d1 + d2, spatial_frequency(s.position));
        }
        h
    }
}

/// Thermal noise power `k_B · T0 · B · 10^(NF/10)` in watts.
pub fn noise_power(t0_kelvin: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    const BOLTZMANN: f64 = 1.380_649e-23;
    BOLTZMANN * t0_kelvin * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0)
}
