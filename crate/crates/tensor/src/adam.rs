use serde::{Deserialize, Serialize};

use crate::{ParamGrads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are dense and zero-initialized;
/// parameters missing from a step's gradients are treated as having zero
/// gradient for that step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let grad = grads.get(&id);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let theta = params.get_mut(id).data_mut();
            for i in 0..theta.len() {
                let g = grad.map_or(0.0, |g| g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                if m[i] == 0.0 {
                    continue;
                }
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(values));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = store(vec![0.5, -1.5]);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let grads = ParamGrads::from([(crate::ParamId(0), vec![0.0, 0.0])]);
        for _ in 0..10 {
            adam.step(&mut params, &grads);
        }
        assert_eq!(params.get(crate::ParamId(0)).data(), &[0.5, -1.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // From zero moments, m_hat = g and v_hat = g^2, so the step is
        // lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let mut params = store(vec![1.0, 1.0, 1.0]);
        let mut adam = Adam::new(cfg, &params);
        let g = [0.3, -2.0, 1e-9];
        adam.step(&mut params, &ParamGrads::from([(crate::ParamId(0), g.to_vec())]));
        for (theta, g) in params.get(crate::ParamId(0)).data().iter().zip(g) {
            let expected = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((theta - expected).abs() < 1e-15, "{theta} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_step_size_tends_to_lr() {
        let cfg = AdamConfig::default();
        let mut params = store(vec![0.0]);
        let mut adam = Adam::new(cfg, &params);
        let grads = ParamGrads::from([(crate::ParamId(0), vec![0.7])]);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = params.get(crate::ParamId(0)).data()[0];
            adam.step(&mut params, &grads);
            last = before - params.get(crate::ParamId(0)).data()[0];
        }
        assert!((last - cfg.lr).abs() / cfg.lr < 0.01, "step {last}");
    }
}
