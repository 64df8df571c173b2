//! Adam with bias correction.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::{NumericsError, Parameters};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment estimates of one parameter.
    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        self.moments.get(name).map(|(m, v)| (m, v))
    }

    /// Applies one update. Parameters without an entry in `grads` are
    /// treated as having a zero gradient.
    pub fn step(
        &mut self,
        params: &mut dyn Parameters,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<(), NumericsError> {
        let mut problem = None;
        params.visit(&mut |name, t| {
            if problem.is_some() {
                return;
            }
            if let Some(g) = grads.get(name) {
                if g.shape() != t.shape() {
                    problem = Some(NumericsError::shape("adam gradient", g.shape(), t.shape()));
                } else if !g.is_finite() {
                    problem = Some(NumericsError::NonFinite(format!("gradient of `{name}`")));
                }
            }
        });
        if let Some(err) = problem {
            return Err(err);
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let moments = &mut self.moments;
        params.visit_mut(&mut |name, t| {
            let (m, v) = moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())));
            let g = grads.get(name);
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, x) in t.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}
