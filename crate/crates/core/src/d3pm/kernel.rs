//! Uniform-mixing forward chain over `K` categories, its one-step posterior
//! and the x0-parameterized reverse transition.

use rand::Rng;

use crate::d3pm::schedule::DiffusionSchedule;
use crate::rng::SimRng;

/// `q(x_τ | x_{τ−1}) = α_τ·1{x_τ = x_{τ−1}} + (1−α_τ)/K` as a distribution
/// over `x_τ`.
pub fn forward_kernel(x_prev: usize, tau: usize, schedule: &DiffusionSchedule, k: usize) -> Vec<f64> {
    keep_or_uniform(x_prev, schedule.alpha(tau), k)
}

/// `q(x_τ | x_0) = ᾱ_τ·1{x_τ = x_0} + (1−ᾱ_τ)/K`.
pub fn forward_marginal(x0: usize, tau: usize, schedule: &DiffusionSchedule, k: usize) -> Vec<f64> {
    keep_or_uniform(x0, schedule.alpha_bar(tau), k)
}

fn keep_or_uniform(center: usize, keep: f64, k: usize) -> Vec<f64> {
    let mut p = vec![(1.0 - keep) / k as f64; k];
    p[center] += keep;
    p
}

/// Keep `x` with probability `keep`, otherwise resample uniformly.
fn sample_keep_or_uniform(x: usize, keep: f64, k: usize, rng: &mut SimRng) -> usize {
    if keep >= 1.0 || rng.random::<f64>() < keep {
        x
    } else {
        rng.random_range(0..k)
    }
}

/// Draw `x_τ ~ q(· | x_0)`.
pub fn forward_sample(x0: usize, tau: usize, schedule: &DiffusionSchedule, k: usize, rng: &mut SimRng) -> usize {
    sample_keep_or_uniform(x0, schedule.alpha_bar(tau), k, rng)
}

/// Draw `x_τ ~ q(· | x_{τ−1})`.
pub fn forward_step_sample(x_prev: usize, tau: usize, schedule: &DiffusionSchedule, k: usize, rng: &mut SimRng) -> usize {
    sample_keep_or_uniform(x_prev, schedule.alpha(tau), k, rng)
}

/// `q(x_{τ−1} = j | x_τ, x_0) ∝ q(x_τ | j) · q(j | x_0)` normalized over `j`.
pub fn posterior(x_tau: usize, x0: usize, tau: usize, schedule: &DiffusionSchedule, k: usize) -> Vec<f64> {
    let kf = k as f64;
    let (a, b) = (schedule.alpha(tau), schedule.alpha_bar(tau - 1));
    let mut p: Vec<f64> = (0..k)
        .map(|j| {
            let f = if j == x_tau { a } else { 0.0 } + (1.0 - a) / kf;
            let g = if j == x0 { b } else { 0.0 } + (1.0 - b) / kf;
            f * g
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// `p(x_{τ−1} | x_τ) = Σ_{x̃0} q(x_{τ−1} | x_τ, x̃0) · π(x̃0)` in `O(K)`.
///
/// With `f(j) = q(x_τ | j)`, `b = ᾱ_{τ−1}` and `Z(x0) = q(x_τ | x0)`:
/// `p(j) = f(j)·[b·π(j)/Z(j) + (1−b)/K · Σ_x0 π(x0)/Z(x0)]`. At τ = 1 this
/// is `π` itself. Clean labels that cannot produce `x_τ` (`Z = 0`) are
/// skipped.
pub fn reverse_distribution(x_tau: usize, tau: usize, pi: &[f64], schedule: &DiffusionSchedule) -> Vec<f64> {
    let k = pi.len();
    if tau == 1 {
        return pi.to_vec();
    }
    let kf = k as f64;
    let (a, abar, b) = (schedule.alpha(tau), schedule.alpha_bar(tau), schedule.alpha_bar(tau - 1));
    let z_off = (1.0 - abar) / kf;
    let z_on = abar + z_off;
    let ratio = |x0: usize| {
        let z = if x0 == x_tau { z_on } else { z_off };
        if z > 0.0 {
            pi[x0] / z
        } else {
            0.0
        }
    };
    let shared: f64 = (1.0 - b) / kf * (0..k).map(ratio).sum::<f64>();
    let mut p: Vec<f64> = (0..k)
        .map(|j| {
            let f = if j == x_tau { a } else { 0.0 } + (1.0 - a) / kf;
            f * (b * ratio(j) + shared)
        })
        .collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    } else {
        p = vec![0.0; k];
        p[x_tau] = 1.0;
    }
    p
}

/// Direct `O(K²)` evaluation of the reverse mixture.
pub fn reverse_distribution_direct(x_tau: usize, tau: usize, pi: &[f64], schedule: &DiffusionSchedule) -> Vec<f64> {
    let k = pi.len();
    let mut p = vec![0.0; k];
    for (x0, &w) in pi.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (j, q) in posterior(x_tau, x0, tau, schedule, k).into_iter().enumerate() {
            p[j] += w * q;
        }
    }
    p
}
