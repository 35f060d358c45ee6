use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::codebook::{inner, Codebook};

/// Per-beam linear SNR for one slot together with its oracle beam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrProfile {
    pub gains: Vec<f64>,
    pub oracle: usize,
    pub oracle_snr: f64,
}

impl SnrProfile {
    /// Builds a profile from raw gains; oracle is the first maximum.
    pub fn from_gains(gains: Vec<f64>) -> Self {
        let oracle = argmax_first(&gains);
        let oracle_snr = gains[oracle];
        SnrProfile { gains, oracle, oracle_snr }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// `10·log10(γ_k)` per beam (may contain `-inf` for null beams).
    pub fn gains_db(&self) -> Vec<f64> {
        self.gains.iter().map(|g| 10.0 * g.log10()).collect()
    }
}

/// Index of the first maximum. Panics on an empty slice.
pub fn argmax_first(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of an empty slice");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `γ_k = P_tx · |hᴴ w_k|² / σ²` for every codebook beam.
pub fn snr_profile(h: &[Complex64], codebook: &Codebook, tx_power: f64, noise_power: f64) -> SnrProfile {
    let scale = tx_power / noise_power;
    let gains = codebook
        .beams()
        .iter()
        .map(|w| scale * inner(h, w).norm_sqr())
        .collect();
    SnrProfile::from_gains(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::codebook::steering_vector;
    use crate::channel::scene::{Scatterer, Scene, SceneConfig};
    use crate::rng::{normal, rng_from_seed};

    #[test]
    fn matched_beam_is_oracle() {
        let cb = Codebook::dft(8, 16).unwrap();
        let c = Complex64::new(0.3, -1.2);
        let h: Vec<_> = cb.beam(5).iter().map(|w| w * c).collect();
        let p = snr_profile(&h, &cb, 2.0, 0.5);
        assert_eq!(p.oracle, 5);
        let expect = 2.0 * c.norm_sqr() / 0.5;
        assert!((p.oracle_snr - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn orthogonal_beam_has_zero_gain() {
        let cb = Codebook::dft(4, 4).unwrap();
        let h = cb.beam(1).to_vec();
        let p = snr_profile(&h, &cb, 1.0, 1.0);
        for k in [0, 2, 3] {
            assert!(p.gains[k] < 1e-25);
        }
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = rng_from_seed(11);
        let cb = Codebook::dft(4, 8).unwrap();
        for _ in 0..20 {
            let h: Vec<_> = (0..4).map(|_| Complex64::new(normal(&mut rng), normal(&mut rng))).collect();
            let p = snr_profile(&h, &cb, 3.0, 0.7);
            let mut best = (0, f64::NEG_INFINITY);
            for k in 0..8 {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..4 {
                    acc += h[n].conj() * cb.beam(k)[n];
                }
                let g = 3.0 * (acc.re * acc.re + acc.im * acc.im) / 0.7;
                assert!((g - p.gains[k]).abs() <= 1e-10 * g.max(1e-300));
                if g > best.1 {
                    best = (k, g);
                }
            }
            assert_eq!(p.oracle, best.0);
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let p = SnrProfile::from_gains(vec![1.0, 3.0, 3.0, 2.0]);
        assert_eq!(p.oracle, 1);
    }

    #[test]
    fn boresight_los_peaks_at_u_zero() {
        let scene = Scene::los_only(&SceneConfig::default());
        let cb = Codebook::dft(16, 32).unwrap();
        let h = scene.synth_channel(16, [30.0, 0.0]);
        let p = snr_profile(&h, &cb, 1.0, 1e-13);
        assert_eq!(p.oracle, 16);
        // Gain profile follows the array factor |Σ_n w_k[n]|².
        let peak = p.oracle_snr;
        for k in 0..32 {
            let af = inner(&steering_vector(16, 0.0), cb.beam(k)).norm_sqr() / 16.0;
            assert!((p.gains[k] / peak - af).abs() < 1e-9);
        }
    }

    #[test]
    fn mirrored_scatterers_give_symmetric_profile() {
        let cfg = SceneConfig::default();
        let refl = Complex64::from_polar(0.2, 0.4);
        let scene = Scene {
            scatterers: vec![
                Scatterer { position: [40.0, 25.0], reflectivity: refl },
                Scatterer { position: [40.0, -25.0], reflectivity: refl },
            ],
            los: false,
            wavelength: cfg.wavelength(),
            path_loss_exponent: 2.0,
            scatter_loss: cfg.scatter_loss,
        };
        let (nt, k) = (16, 32);
        let cb = Codebook::dft(nt, k).unwrap();
        let h = scene.synth_channel(nt, [22.0, 0.0]);
        let p = snr_profile(&h, &cb, 1.0, 1e-13);
        // Beam k/2 is boresight; beam k/2 + i mirrors beam k/2 − i.
        for i in 1..k / 2 {
            let (a, b) = (p.gains[k / 2 + i], p.gains[k / 2 - i]);
            assert!((a - b).abs() <= 1e-9 * a.max(b), "offset {i}: {a} vs {b}");
        }
    }
}
