use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        AdamW {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients currently held in `store`, then
    /// zero them. Fails without touching any parameter if a gradient is not
    /// finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(p) = store.iter().find(|p| p.requires_grad && !p.grad.all_finite()) {
            return Err(Error::Training(format!("non-finite gradient in parameter `{}`", p.name)));
        }
        self.step += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if !p.requires_grad {
                continue;
            }
            let grads = p.grad.data().to_vec();
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grads[i];
                *w -= c.lr * c.weight_decay * *w;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}

/// Rescale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter(|p| p.requires_grad)
        .flat_map(|p| p.grad.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![1, 1], vec![value]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_step_is_pure_decay() {
        let mut store = single(2.5);
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::new(cfg.clone(), &store);
        opt.step(&mut store).unwrap();
        let expect = 2.5 * (1.0 - cfg.lr * cfg.weight_decay);
        assert_eq!(store.iter().next().unwrap().value.data()[0], expect);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr_sign() {
        let mut store = single(0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg.clone(), &store);
        let mut last = 0.0;
        for _ in 0..2000 {
            store.iter_mut().next().unwrap().grad.data_mut()[0] = -0.37;
            let before = store.iter().next().unwrap().value.data()[0];
            opt.step(&mut store).unwrap();
            last = store.iter().next().unwrap().value.data()[0] - before;
        }
        assert!((last - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0), "{last}");
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut store = single(1.0);
        store.iter_mut().next().unwrap().grad.data_mut()[0] = f64::NAN;
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let err = opt.step(&mut store).unwrap_err().to_string();
        assert!(err.contains("`w`"), "{err}");
        assert_eq!(store.iter().next().unwrap().value.data()[0], 1.0);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = single(1.0);
        let id = store.find("w").unwrap();
        store.set_requires_grad(id, false);
        store.get_mut(id).grad.data_mut()[0] = 3.0;
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        opt.step(&mut store).unwrap();
        assert_eq!(store.value(id).data()[0], 1.0);
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[1, 2]));
        store.get_mut(a).grad = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let before = clip_grad_norm(&mut store, 1.0);
        assert_eq!(before, 5.0);
        let g = store.get(a).grad.data();
        assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs() < 1e-12);
    }
}
