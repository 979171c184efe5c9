use serde::{Deserialize, Serialize};

use super::params::{FieldParams, GradientBuffer};
use crate::error::{NvfError, Result};
use crate::real::Real;

/// Adam hyperparameters. Explicit (feature) and implicit (decoder)
/// parameters use separate learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr_explicit: f64,
    pub lr_implicit: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_explicit: 1e-2,
            lr_implicit: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr_ex", self.lr_explicit), ("lr_im", self.lr_implicit), ("eps", self.eps)] {
            if !v.is_finite() || v < 0.0 {
                return Err(NvfError::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(NvfError::config(name, format!("must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// First/second moment estimates for every parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R = f32> {
    pub config: AdamConfig,
    pub step: u64,
    /// Multiplier on both learning rates, for annealing.
    pub lr_scale: f64,
    first: Vec<Vec<R>>,
    second: Vec<Vec<R>>,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &FieldParams<R>, config: AdamConfig) -> Self {
        let zeros = || params.arrays().iter().map(|(_, a)| vec![R::zero(); a.len()]).collect();
        AdamState {
            config,
            step: 0,
            lr_scale: 1.0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Apply one bias-corrected Adam update and zero `grads`.
    pub fn step(&mut self, params: &mut FieldParams<R>, grads: &mut GradientBuffer<R>) -> Result<()> {
        grads.check_matches(params)?;
        if self.first.len() != params.arrays().len() {
            return Err(NvfError::contract("optimizer state does not match parameters"));
        }
        for (group, g) in grads.grads.arrays() {
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(NvfError::Optimizer {
                    group: group.name(),
                    reason: format!("non-finite gradient {bad:?}"),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = R::lit(c.beta1);
        let b2 = R::lit(c.beta2);
        let one = R::one();
        let bc1 = R::lit(1.0 - c.beta1.powi(t));
        let bc2 = R::lit(1.0 - c.beta2.powi(t));
        let eps = R::lit(c.eps);
        let grad_arrays = grads.grads.arrays();
        for (((group, p), (_, g)), (m, v)) in params
            .arrays_mut()
            .into_iter()
            .zip(grad_arrays)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let lr = R::lit(self.lr_scale * if group.is_explicit() { c.lr_explicit } else { c.lr_implicit });
            for (((pv, &gv), mv), vv) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        grads.zero();
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step<R: Real>(
    params: &mut FieldParams<R>,
    grads: &mut GradientBuffer<R>,
    state: &mut AdamState<R>,
) -> Result<()> {
    state.step(params, grads)
}
