use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RAdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// When false the update is plain Adam with bias correction.
    pub rectify: bool,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        RAdamConfig { learning_rate: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, rectify: true }
    }
}

/// Moment estimates for every parameter of one store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: RAdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore, config: RAdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        OptimizerState { config, step: 0, first_moment: zeros.clone(), second_moment: zeros }
    }

    /// One rectified-Adam update of every trainable parameter using the
    /// gradients currently stored in `store`.
    pub fn radam_step(&mut self, store: &mut ParamStore) {
        let RAdamConfig { learning_rate: lr, beta1, beta2, eps, rectify } = self.config;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let rho_t = rho_inf - 2.0 * t * beta2.powf(t) / bc2;
        let rect = if rho_t > 5.0 {
            Some(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt())
        } else {
            None
        };
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.param(id).trainable {
                continue;
            }
            let grad = store.grad(id).to_vec();
            let m = &mut self.first_moment[id.0];
            let v = &mut self.second_moment[id.0];
            let values = store.values_mut(id);
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let step = if !rectify {
                    m_hat / ((v[i] / bc2).sqrt() + eps)
                } else if let Some(r) = rect {
                    m_hat * r * bc2.sqrt() / (v[i].sqrt() + eps)
                } else {
                    m_hat
                };
                values[i] -= lr * step;
            }
        }
    }
}
