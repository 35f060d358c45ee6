use serde::{Deserialize, Serialize};

use crate::channel::SnrProfile;
use crate::error::{Error, Result};
use crate::rng::{normal, SimRng};

/// Where the feedback noise is added before quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDomain {
    /// `x = 10·log10(γ + ε) + ν`, ν in dB.
    Db,
    /// `x = 10·log10(max(γ + ν, 0) + ε)`, ν in linear SNR units.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackConfig {
    /// Quantizer levels Q.
    pub levels: usize,
    /// Feedback noise std σ_v.
    pub noise_std: f64,
    pub noise_domain: NoiseDomain,
    /// Reported dynamic range `[lo, hi]` in dB.
    pub range_db: [f64; 2],
    pub floor_eps: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            levels: 8,
            noise_std: 0.0,
            noise_domain: NoiseDomain::Db,
            range_db: [-10.0, 70.0],
            floor_eps: 1e-12,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::validation(format!("{path}.levels"), "need at least 2 quantizer levels"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::validation(format!("{path}.noise_std"), "must be nonnegative"));
        }
        let [lo, hi] = self.range_db;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::validation(format!("{path}.range_db"), "need finite lo < hi"));
        }
        if !(self.floor_eps > 0.0) {
            return Err(Error::validation(format!("{path}.floor_eps"), "must be positive"));
        }
        Ok(())
    }

    /// Quantizer step `Δ = (hi − lo) / (Q − 1)`.
    pub fn step(&self) -> f64 {
        (self.range_db[1] - self.range_db[0]) / (self.levels - 1) as f64
    }

    /// Clip to the range and round to the nearest level.
    pub fn quantize_db(&self, x: f64) -> f64 {
        let [lo, hi] = self.range_db;
        let clipped = x.clamp(lo, hi);
        let level = ((clipped - lo) / self.step()).round();
        (lo + level * self.step()).min(hi)
    }

    /// Noisy quantized report for a linear SNR.
    pub fn report(&self, gamma: f64, rng: &mut SimRng) -> f64 {
        let noise = if self.noise_std > 0.0 { self.noise_std * normal(rng) } else { 0.0 };
        let x = match self.noise_domain {
            NoiseDomain::Db => 10.0 * (gamma + self.floor_eps).log10() + noise,
            NoiseDomain::Linear => 10.0 * ((gamma + noise).max(0.0) + self.floor_eps).log10(),
        };
        self.quantize_db(x)
    }

    /// Affine map of a reported dB value from `[lo, hi]` to `[−1, 1]`.
    pub fn normalize(&self, fb_db: f64) -> f64 {
        let [lo, hi] = self.range_db;
        2.0 * (fb_db - lo) / (hi - lo) - 1.0
    }
}

/// Serving rule: the probed beam with the highest report, first position on
/// ties. Returns `(served beam, executed linear SNR)`.
pub fn serve(probes: &[usize], feedback_db: &[f64], profile: &SnrProfile) -> Result<(usize, f64)> {
    if probes.is_empty() || probes.len() != feedback_db.len() {
        return Err(Error::Contract(format!(
            "serve needs matching nonempty probes and feedback, got {} and {}",
            probes.len(),
            feedback_db.len()
        )));
    }
    let mut best = 0;
    for (i, &f) in feedback_db.iter().enumerate().skip(1) {
        if f > feedback_db[best] {
            best = i;
        }
    }
    let beam = probes[best];
    Ok((beam, profile.gains[beam]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn quantizer_examples() {
        let cfg = FeedbackConfig::default();
        let mut rng = rng_from_seed(0);
        let gamma = 10f64.powf(3.3);
        assert!((cfg.report(gamma, &mut rng) - 35.714_285_714).abs() < 1e-6);
        assert_eq!(cfg.quantize_db(-40.0), -10.0);
        assert_eq!(cfg.quantize_db(95.0), 70.0);
        assert_eq!(cfg.report(0.0, &mut rng), -10.0);

        let fine = FeedbackConfig { levels: 1 << 20, ..cfg };
        for x in [-3.217, 12.5, 44.0001, 69.99] {
            let q = fine.quantize_db(x);
            assert!((q - x).abs() <= fine.step() / 2.0 + 1e-12);
            assert!((q - x).abs() < 1e-4);
        }
    }

    #[test]
    fn normalization_maps_range_to_unit_interval() {
        let cfg = FeedbackConfig::default();
        assert_eq!(cfg.normalize(-10.0), -1.0);
        assert_eq!(cfg.normalize(70.0), 1.0);
        assert_eq!(cfg.normalize(30.0), 0.0);
    }

    #[test]
    fn noisy_reports_stay_on_the_grid() {
        for domain in [NoiseDomain::Db, NoiseDomain::Linear] {
            let cfg = FeedbackConfig { noise_std: 3.0, noise_domain: domain, ..Default::default() };
            let mut rng = rng_from_seed(4);
            for i in 0..500 {
                let r = cfg.report(i as f64 * 7.3, &mut rng);
                let level = (r - cfg.range_db[0]) / cfg.step();
                assert!((level - level.round()).abs() < 1e-9 && (-10.0..=70.0).contains(&r));
            }
        }
    }

    #[test]
    fn serve_rules() {
        let profile = SnrProfile::from_gains(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(serve(&[3], &[-2.0], &profile).unwrap(), (3, 4.0));
        assert_eq!(serve(&[0, 4, 2], &[3.0, 9.0, 9.0], &profile).unwrap(), (4, 5.0));
        assert!(matches!(serve(&[], &[], &profile), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn quantizer_is_idempotent(x in -100.0f64..150.0, q in 2usize..300) {
            let cfg = FeedbackConfig { levels: q, ..Default::default() };
            let once = cfg.quantize_db(x);
            prop_assert_eq!(cfg.quantize_db(once), once);
        }

        #[test]
        fn serve_matches_brute_force(fb in proptest::collection::vec(-10i32..70, 1..8)) {
            let fb: Vec<f64> = fb.into_iter().map(f64::from).collect();
            let probes: Vec<usize> = (0..fb.len()).rev().collect();
            let profile = SnrProfile::from_gains((0..fb.len()).map(|k| k as f64).collect());
            let (beam, _) = serve(&probes, &fb, &profile).unwrap();
            let max = fb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = fb.iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(beam, probes[first]);
        }
    }
}
