use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// Nearly-constant-velocity mobility inside a disk centered on the BS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub velocity_correlation: f64,
    /// Acceleration std in m/s².
    pub accel_std: f64,
    pub v_max: f64,
    pub radius: f64,
    /// Initial speed in m/s with uniform heading. `None` draws the initial
    /// velocity from the stationary distribution of the velocity recursion.
    pub initial_speed: Option<f64>,
    /// Minimum initial distance from the BS (m).
    pub min_start_distance: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            velocity_correlation: 0.99,
            accel_std: 2.0,
            v_max: 10.0,
            radius: 50.0,
            initial_speed: None,
            min_start_distance: 5.0,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let at = |f: &str| format!("{path}.{f}");
        if !(0.0..=1.0).contains(&self.velocity_correlation) {
            return Err(Error::validation(at("velocity_correlation"), "must lie in [0, 1]"));
        }
        if !(self.accel_std >= 0.0) {
            return Err(Error::validation(at("accel_std"), "must be nonnegative"));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::validation(at("v_max"), "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::validation(at("radius"), "must be positive"));
        }
        if let Some(s) = self.initial_speed {
            if !(0.0..=self.v_max).contains(&s) {
                return Err(Error::validation(at("initial_speed"), "must lie in [0, v_max]"));
            }
        }
        if !(0.0..self.radius).contains(&self.min_start_distance) {
            return Err(Error::validation(at("min_start_distance"), "must lie in [0, radius)"));
        }
        Ok(())
    }

    /// Random start: position uniform by area in the disk (outside the
    /// minimum start distance), velocity per [`MobilityConfig::initial_speed`].
    pub fn initial_state(&self, dt: f64, rng: &mut SimRng) -> UeState {
        let r0 = self.min_start_distance;
        let u: f64 = rand::Rng::random(rng);
        let r = (r0 * r0 + u * (self.radius * self.radius - r0 * r0)).sqrt();
        let angle = rand::Rng::random::<f64>(rng) * std::f64::consts::TAU;
        let position = [r * angle.cos(), r * angle.sin()];
        let velocity = match self.initial_speed {
            Some(speed) => {
                let heading = rand::Rng::random::<f64>(rng) * std::f64::consts::TAU;
                [speed * heading.cos(), speed * heading.sin()]
            }
            None => {
                let rho = self.velocity_correlation;
                let std = if rho < 1.0 {
                    self.accel_std * dt / (1.0 - rho * rho).sqrt()
                } else {
                    self.v_max / 2.0
                };
                let v = [std * gauss(rng), std * gauss(rng)];
                clamp_speed(v, self.v_max)
            }
        };
        UeState { position, velocity }
    }
}

fn gauss(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn clamp_speed(v: [f64; 2], v_max: f64) -> [f64; 2] {
    let speed = dot(v, v).sqrt();
    if speed > v_max {
        let s = v_max / speed;
        [v[0] * s, v[1] * s]
    } else {
        v
    }
}

fn reflect(v: [f64; 2], n: [f64; 2]) -> [f64; 2] {
    let k = 2.0 * dot(v, n);
    [v[0] - k * n[0], v[1] - k * n[1]]
}

/// One mobility step: AR(1) velocity with Gaussian acceleration, speed clamp,
/// then specular reflection off the disk boundary.
pub fn step_mobility(state: &UeState, dt: f64, rng: &mut SimRng, cfg: &MobilityConfig) -> UeState {
    let rho = cfg.velocity_correlation;
    let kick = cfg.accel_std * dt;
    let v = if kick > 0.0 {
        [
            rho * state.velocity[0] + kick * gauss(rng),
            rho * state.velocity[1] + kick * gauss(rng),
        ]
    } else {
        [rho * state.velocity[0], rho * state.velocity[1]]
    };
    let mut v = clamp_speed(v, cfg.v_max);
    let radius = cfg.radius;
    let mut p = state.position;
    let mut d = [v[0] * dt, v[1] * dt];
    for _ in 0..8 {
        let end = [p[0] + d[0], p[1] + d[1]];
        if dot(end, end) <= radius * radius {
            p = end;
            d = [0.0, 0.0];
            break;
        }
        // Leaving the disk: |p + s·d| = R for the exit fraction s ∈ (0, 1].
        let a = dot(d, d);
        let b = 2.0 * dot(p, d);
        let c = dot(p, p) - radius * radius;
        let s = ((-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
        let hit = [p[0] + s * d[0], p[1] + s * d[1]];
        let hn = dot(hit, hit).sqrt();
        let normal = [hit[0] / hn, hit[1] / hn];
        let rest = [(1.0 - s) * d[0], (1.0 - s) * d[1]];
        d = reflect(rest, normal);
        v = reflect(v, normal);
        p = hit;
    }
    if d != [0.0, 0.0] {
        p = [p[0] + d[0], p[1] + d[1]];
    }
    let r = dot(p, p).sqrt();
    if r > radius {
        p = [p[0] * radius / r, p[1] * radius / r];
    }
    UeState { position: p, velocity: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn still(cfg: &mut MobilityConfig) {
        cfg.accel_std = 0.0;
        cfg.velocity_correlation = 1.0;
    }

    #[test]
    fn straight_line_motion() {
        let mut cfg = MobilityConfig::default();
        still(&mut cfg);
        let s = UeState { position: [1.0, 2.0], velocity: [3.0, -4.0] };
        let n = step_mobility(&s, 0.04, &mut rng_from_seed(0), &cfg);
        assert!((n.position[0] - 1.12).abs() < 1e-12);
        assert!((n.position[1] - 1.84).abs() < 1e-12);
        assert_eq!(n.velocity, s.velocity);
    }

    #[test]
    fn head_on_reflection_preserves_speed() {
        let mut cfg = MobilityConfig::default();
        still(&mut cfg);
        let s = UeState { position: [49.9, 0.0], velocity: [5.0, 0.0] };
        let n = step_mobility(&s, 0.04, &mut rng_from_seed(0), &cfg);
        assert!((n.velocity[0] + 5.0).abs() < 1e-12 && n.velocity[1].abs() < 1e-12);
        assert!((n.position[0] - 49.9).abs() < 1e-9);

        let s = UeState { position: [0.0, -49.95], velocity: [3.0, -4.0] };
        let n = step_mobility(&s, 0.04, &mut rng_from_seed(0), &cfg);
        let speed = dot(n.velocity, n.velocity).sqrt();
        assert!((speed - 5.0).abs() < 1e-12);
        assert!(dot(n.position, n.position).sqrt() <= 50.0);
    }

    #[test]
    fn long_run_stays_in_bounds() {
        let cfg = MobilityConfig::default();
        let mut rng = rng_from_seed(3);
        let mut s = cfg.initial_state(0.04, &mut rng);
        for _ in 0..100_000 {
            s = step_mobility(&s, 0.04, &mut rng, &cfg);
            assert!(dot(s.position, s.position).sqrt() <= cfg.radius + 1e-12);
            assert!(dot(s.velocity, s.velocity).sqrt() <= cfg.v_max + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn any_step_stays_in_disk(
            r in 0.0f64..50.0, a in 0.0f64..6.3,
            vx in -10.0f64..10.0, vy in -10.0f64..10.0,
            dt in 0.001f64..2.0, seed in any::<u64>(),
        ) {
            let cfg = MobilityConfig::default();
            let s = UeState { position: [r * a.cos(), r * a.sin()], velocity: clamp_speed([vx, vy], 10.0) };
            let n = step_mobility(&s, dt, &mut rng_from_seed(seed), &cfg);
            prop_assert!(dot(n.position, n.position).sqrt() <= 50.0 + 1e-9);
            prop_assert!(dot(n.velocity, n.velocity).sqrt() <= 10.0 + 1e-9);
        }
    }
}
