use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Model, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// `θ ← θ − α·m̂/(√v̂ + ε)` using the gradients currently stored in `model`.
    pub fn step(&mut self, model: &mut Model<T>) {
        self.step += 1;
        let c = self.cfg;
        let t = self.step as i32;
        let lr_t = T::lit(c.learning_rate);
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.epsilon));
        let (m_all, v_all) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        model.visit_params(&mut |_, value, grad| {
            if m_all.len() == idx {
                m_all.push(vec![T::zero(); value.len()]);
                v_all.push(vec![T::zero(); value.len()]);
            }
            let (m, v) = (&mut m_all[idx], &mut v_all[idx]);
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}
