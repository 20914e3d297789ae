//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
}

pub fn grad_norm<T: Scalar>(grads: &ModelParams<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|g| g.f64() * g.f64())
        .sum::<f64>()
        .sqrt()
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        Self {
            config,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Clips, then applies one update. Returns the gradient norm before clipping.
    pub fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> f64 {
        let norm = grad_norm(grads);
        let c = self.config;
        let clip = if c.clip > 0.0 && norm > c.clip { c.clip / norm } else { 1.0 };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = T::of(c.lr * bc2.sqrt() / bc1);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let eps = T::of(c.eps * bc2.sqrt());
        let clip = T::of(clip);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.data.len() {
                let gi = g.data[i] * clip;
                m.data[i] = b1 * m.data[i] + (T::one() - b1) * gi;
                v.data[i] = b2 * v.data[i] + (T::one() - b2) * gi * gi;
                p.data[i] = p.data[i] - step * m.data[i] / (v.data[i].sqrt() + eps);
            }
        }
        norm
    }
}
