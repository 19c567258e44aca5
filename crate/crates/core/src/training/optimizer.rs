use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::numerics::Tensor;

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Iterations without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Validate every this many iterations.
    pub val_every: usize,
    /// Cap on validation windows, taken at an even stride.
    pub val_max_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            max_iterations: 1200,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 50,
            seed: 0,
            clip_norm: 5.0,
            val_every: 10,
            val_max_windows: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be > 0");
        }
        if self.max_iterations == 0 || self.batch_size == 0 || self.val_every == 0 || self.val_max_windows == 0 {
            return bad("train.max_iterations, batch_size, val_every and val_max_windows must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("train.adam_eps and train.clip_norm must be > 0");
        }
        Ok(())
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// One bias-corrected Adam update after global-norm clipping. Rejects
/// non-finite gradients, naming the first offending parameter.
pub fn adam_step(params: &mut ParamSet, grads: &mut [Tensor], state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::InvalidData("gradient count does not match parameters".into()));
    }
    for (name, g) in params.names().iter().zip(grads.iter()) {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    clip_gradients(grads, cfg.clip_norm);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pj, mj), vj) in p.data_mut().iter_mut().zip(m).zip(v) {
            *pj -= cfg.learning_rate * (mj / c1) / ((vj / c2).sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}
