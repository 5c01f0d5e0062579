use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamStore;
use crate::tensor::{Real, Tensor};

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: default_lr(), beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam step at step number `t >= 1`.
pub fn adam_update<T: Real>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "Adam step numbers start at 1");
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powf(t as f64));
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.eps);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam state for every trainable parameter of a store.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Option<Tensor<T>>>,
    v: Vec<Option<Tensor<T>>>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = |p: &crate::models::Parameter<T>| p.trainable.then(|| Tensor::zeros(p.tensor.shape()));
        Adam { config, m: store.iter().map(zeros).collect(), v: store.iter().map(zeros).collect(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one step. `grads[i]` is the gradient of parameter `i`; a
    /// missing gradient counts as zero.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) {
        self.t += 1;
        for (i, g) in grads.iter().enumerate() {
            let (Some(m), Some(v)) = (self.m[i].as_mut(), self.v[i].as_mut()) else { continue };
            let p = store.get_mut(i);
            let zero;
            let g = match g {
                Some(g) => g.data(),
                None => {
                    zero = vec![T::zero(); p.tensor.len()];
                    &zero
                }
            };
            adam_update(p.tensor.data_mut(), g, m.data_mut(), v.data_mut(), &self.config, self.t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_scalar_trace() {
        let cfg = AdamConfig::default();
        let grads = [0.5, -1.25, 2.0, 0.1, -0.3];
        let (mut p, mut m, mut v) = ([1.0f64], [0.0f64], [0.0f64]);
        let (mut rp, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            let t = t as i32 + 1;
            adam_update(&mut p, &[g], &mut m, &mut v, &cfg, t as u64);
            rm = 0.9 * rm + 0.1 * g;
            rv = 0.999 * rv + 0.001 * g * g;
            let mh = rm / (1.0 - 0.9f64.powi(t));
            let vh = rv / (1.0 - 0.999f64.powi(t));
            rp -= 1e-3 * mh / (vh.sqrt() + 1e-7);
            assert!((p[0] - rp).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([2.0f64], [0.4f64], [0.9f64]);
        adam_update(&mut p, &[0.0], &mut m, &mut v, &cfg, 3);
        assert!((m[0] - 0.36).abs() < 1e-15 && (v[0] - 0.8991).abs() < 1e-15);
        let (mut p, mut m, mut v) = ([2.0f64], [0.0f64], [0.0f64]);
        adam_update(&mut p, &[0.0], &mut m, &mut v, &cfg, 1);
        assert_eq!(p[0], 2.0);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = ([0.0f64], [0.0f64], [0.0f64]);
        let mut last = 0.0;
        for t in 1..=2000 {
            let before = p[0];
            adam_update(&mut p, &[-3.0], &mut m, &mut v, &cfg, t);
            last = p[0] - before;
        }
        assert!((last - 1e-3).abs() < 1e-9, "{last}");
    }
}
