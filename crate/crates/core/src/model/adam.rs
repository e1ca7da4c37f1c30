use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{Float, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments plus the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Params<F>,
    pub v: Params<F>,
    pub step: u64,
}

impl<F: Float> AdamState<F> {
    pub fn new(like: &Params<F>) -> Self {
        let mut m = like.clone();
        m.scale(F::zero());
        Self { v: m.clone(), m, step: 0 }
    }
}

/// One bias-corrected Adam update at step `t` (1-based) on flat slices.
pub fn adam_update<F: Float>(p: &mut [F], g: &[F], m: &mut [F], v: &mut [F], t: u64, lr: f64, cfg: &AdamConfig) {
    let (b1, b2) = (F::lit(cfg.beta1), F::lit(cfg.beta2));
    let (one, eps) = (F::one(), F::lit(cfg.eps));
    let c1 = F::lit(1.0 - cfg.beta1.powf(t as f64));
    let c2 = F::lit(1.0 - cfg.beta2.powf(t as f64));
    let lr = F::lit(lr);
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        p[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Applies one update to every tensor. A non-finite gradient aborts before
/// anything is modified.
pub fn adam_step<F: Float>(
    params: &mut Params<F>,
    grads: &Params<F>,
    state: &mut AdamState<F>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), ModelError> {
    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFinite(format!("gradient of `{name}` at step {}", state.step + 1)));
    }
    state.step += 1;
    let t = state.step;
    let grads = grads.tensors();
    for (((p, (_, g, _)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(state.m.tensors_mut()).zip(state.v.tensors_mut()) {
        adam_update(p, g, m, v, t, lr, cfg);
    }
    params.check_finite("parameter")
}
