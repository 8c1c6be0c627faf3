//! AdamW with bias correction and decoupled weight decay.

use crate::encoder::{EncoderParams, ParamGrads};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: ParamGrads<T>,
    pub v: ParamGrads<T>,
    pub step_count: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &EncoderParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step_count: 0,
        }
    }
}

impl AdamW {
    /// One in-place update of `params`.
    pub fn step<T: Real>(
        &self,
        params: &mut EncoderParams<T>,
        grads: &ParamGrads<T>,
        state: &mut OptimizerState<T>,
        lr: f64,
    ) -> Result<()> {
        if grads.config != params.config || state.m.config != params.config || state.v.config != params.config {
            return Err(Error::ShapeMismatch(
                "parameters, gradients and optimizer state disagree".into(),
            ));
        }
        for (name, g) in grads.tensors() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {name}[{i}] = {}", g[i])));
            }
        }
        state.step_count += 1;
        let t = state.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        let grads = grads.tensors();
        let ms = state.m.tensors_mut();
        let vs = state.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for k in 0..p.len() {
                let gk = g[k].to_f64_lossless();
                let mk = self.beta1 * m[k].to_f64_lossless() + (1.0 - self.beta1) * gk;
                let vk = self.beta2 * v[k].to_f64_lossless() + (1.0 - self.beta2) * gk * gk;
                m[k] = T::from_f64_lossy(mk);
                v[k] = T::from_f64_lossy(vk);
                let m_hat = mk / bias1;
                let v_hat = vk / bias2;
                let pk = p[k].to_f64_lossless() * decay - lr * m_hat / (v_hat.sqrt() + self.eps);
                p[k] = T::from_f64_lossy(pk);
            }
        }
        Ok(())
    }
}
