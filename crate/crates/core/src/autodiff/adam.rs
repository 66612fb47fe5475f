use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;

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

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdamError {
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("parameter {name}: shape {param:?} but gradient {grad:?}")]
    ShapeMismatch {
        name: String,
        param: (usize, usize),
        grad: (usize, usize),
    },
    #[error("expected {expected} parameters, got {got}")]
    Count { expected: usize, got: usize },
}

/// Adam with bias correction. Moments are laid out in the same order as the
/// parameter slice passed to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        Self { config, t: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. All gradients are validated before any parameter
    /// is touched, so a rejected step leaves the state unchanged.
    pub fn step<'p>(
        &mut self,
        params: impl IntoIterator<Item = (&'p str, &'p mut Tensor)>,
        grads: &[Tensor],
    ) -> Result<(), AdamError> {
        let params: Vec<(&str, &mut Tensor)> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AdamError::Count {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(AdamError::ShapeMismatch {
                    name: name.to_string(),
                    param: p.shape(),
                    grad: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(AdamError::NonFiniteGradient {
                    name: name.to_string(),
                });
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, ((_, p), g)) in params.into_iter().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
