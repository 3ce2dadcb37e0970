use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        AdamWHyper {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// First and second moments, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct OptimState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &Params<T>) -> Self {
        OptimState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One AdamW update of a single tensor. `step` is the 1-based step after incrementing.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    hyper: &AdamWHyper,
    lr: f64,
    decay: bool,
) {
    let bc1 = 1.0 - hyper.beta1.powi(step as i32);
    let bc2 = 1.0 - hyper.beta2.powi(step as i32);
    let shrink = if decay { 1.0 - lr * hyper.weight_decay } else { 1.0 };
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        let g = g.to_f64().unwrap_or(f64::NAN);
        let m_new = hyper.beta1 * m.to_f64().unwrap_or(f64::NAN) + (1.0 - hyper.beta1) * g;
        let v_new = hyper.beta2 * v.to_f64().unwrap_or(f64::NAN) + (1.0 - hyper.beta2) * g * g;
        let m_hat = m_new / bc1;
        let v_hat = v_new / bc2;
        let p_new = p.to_f64().unwrap_or(f64::NAN) * shrink - lr * m_hat / (v_hat.sqrt() + hyper.eps);
        *m = T::lit(m_new);
        *v = T::lit(v_new);
        *p = T::lit(p_new);
    }
}

/// AdamW with decoupled weight decay on weight matrices only (no decay on
/// embeddings, biases or normalization parameters).
pub fn adamw_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Params<T>,
    state: &mut OptimState<T>,
    hyper: &AdamWHyper,
    lr: f64,
) -> Result<()> {
    if grads.values.len() != params.values.len() || state.m.values.len() != params.values.len() {
        return Err(Error::Structure("optimizer shapes do not match the parameters".into()));
    }
    state.step += 1;
    let layout = params.layout.clone();
    for entry in &layout.entries {
        let r = entry.range();
        adamw_update(
            &mut params.values[r.clone()],
            &grads.values[r.clone()],
            &mut state.m.values[r.clone()],
            &mut state.v.values[r.clone()],
            state.step,
            hyper,
            lr,
            entry.role.decays(),
        );
        if params.values[r].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate {
                tensor: entry.name.clone(),
            });
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(grads: &mut Params<T>, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = T::lit(max_norm / norm);
        for g in grads.values.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}
