use serde::{Deserialize, Serialize};

use super::ProbeParams;
use crate::error::{Error, Result};

/// Cosine annealing from `lr0` at step 0 to zero at `total_steps`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64) -> f64 {
    let t = step.min(total_steps) as f64 / total_steps.max(1) as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Optimizer hyper-parameters shared by every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            momentum: 0.9,
            weight_decay: 0.0,
            clip_norm: 1.0,
        }
    }
}

/// Momentum buffers, same shape as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ProbeParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ProbeParams) -> Self {
        OptimizerState {
            velocity: ProbeParams::zeros(params.dim(), params.num_classes()),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Global gradient norm after clipping.
    pub clipped_norm: f64,
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm(grads: &mut ProbeParams, max_norm: f64) -> f64 {
    let norm = grads.values().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.values_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// One SGD update: clip the global gradient norm, then
/// `v ← momentum·v + g` and `p ← p − lr·v` (no dampening, no Nesterov).
/// Weight decay, when non-zero, is added to the clipped gradient.
pub fn sgd_step_with_clip(
    params: &mut ProbeParams,
    grads: &mut ProbeParams,
    state: &mut OptimizerState,
    lr: f64,
    config: &SgdConfig,
) -> Result<StepStats> {
    if !params.same_shape(grads) || !params.same_shape(&state.velocity) {
        return Err(Error::dims(
            "parameter, gradient and velocity shapes differ",
        ));
    }
    if grads.values().any(|g| !g.is_finite()) {
        return Err(Error::Diverged { step: state.step });
    }
    let grad_norm = clip_global_norm(grads, config.clip_norm);
    let clipped_norm = grads.values().map(|g| g * g).sum::<f64>().sqrt();
    if config.weight_decay != 0.0 {
        for (g, p) in grads.values_mut().zip(params.values()) {
            *g += config.weight_decay * p;
        }
    }
    for ((p, v), g) in params
        .values_mut()
        .zip(state.velocity.values_mut())
        .zip(grads.values())
    {
        *v = config.momentum * *v + g;
        *p -= lr * *v;
    }
    state.step += 1;
    Ok(StepStats {
        grad_norm,
        clipped_norm,
    })
}
