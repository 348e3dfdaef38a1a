//! Adam optimizer with decoupled weight decay.
//!
//! The decay term is subtracted as lr * weight_decay * param, outside the
//! moment estimates, so it never leaks into the adaptive scaling.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numerics::params::ParamSet;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> AdamState {
        AdamState {
            cfg,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter that received a gradient.
    /// Any non-finite gradient rejects the whole update: no parameter is
    /// touched and the step counter does not advance.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &IndexMap<String, Tensor>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient for {name:?} is not finite"
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);

        for name in params.trainable_names() {
            let g = match grads.get(&name) {
                Some(g) => g,
                None => continue,
            };
            let param = params.tensor_mut(&name)?;
            if g.shape() != param.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: param.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.cfg.beta1 * m.data()[i] + (1.0 - self.cfg.beta1) * gi;
                let vi = self.cfg.beta2 * v.data()[i] + (1.0 - self.cfg.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let p = param.data()[i];
                param.data_mut()[i] =
                    p - lr * m_hat / (v_hat.sqrt() + self.cfg.eps) - lr * self.cfg.weight_decay * p;
            }
        }
        Ok(())
    }
}
