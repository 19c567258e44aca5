use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{FeatureScaling, WindowSample};
use crate::error::{Error, Result};
use crate::model::{HybridForecaster, WindowForward};
use crate::numerics::{Tape, Tensor, Var};

use super::config::LossConfig;
use super::policy::{reward, sample_action, PolicyHead};
use super::terms::{entropy, finite_difference_sq, l2_penalty, rl_term, smoothness, squared_error};

/// Frozen stochastic choices for one window, so the objective is a
/// deterministic function of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPlan {
    pub action: usize,
    pub advantage: f64,
    /// Input perturbation direction for the gradient penalty.
    pub direction: Option<Tensor>,
}

/// A window's nominal forward pass, kept alive until its plan is known.
pub struct PendingWindow {
    tape: Tape,
    vars: Vec<Var>,
    fwd: WindowForward,
}

impl PendingWindow {
    pub fn start(model: &HybridForecaster, window: &WindowSample) -> Result<Self> {
        let mut tape = Tape::new();
        let vars = model.params().bind(&mut tape);
        let fwd = model.forward(&mut tape, &vars, window)?;
        Ok(Self { tape, vars, fwd })
    }

    /// Policy probabilities over the action grid.
    pub fn policy(&self) -> Vec<f64> {
        self.tape.value(self.fwd.log_policy).data().iter().map(|v| v.exp()).collect()
    }

    /// Scaled predictions, one per configured horizon.
    pub fn preds(&self) -> Vec<f64> {
        self.fwd.preds.iter().map(|p| self.tape.value(*p).item()).collect()
    }
}

/// Forward passes for a batch, run in parallel, returned in input order.
pub fn start_batch(model: &HybridForecaster, windows: &[&WindowSample]) -> Result<Vec<PendingWindow>> {
    windows.par_iter().map(|w| PendingWindow::start(model, w)).collect()
}

/// Samples an action and a perturbation direction per window from its own
/// seed, scores the adjusted forecasts and turns rewards into advantages.
pub fn plan_batch(
    head: &mut PolicyHead,
    pending: &[PendingWindow],
    windows: &[&WindowSample],
    scaling: &FeatureScaling,
    cfg: &LossConfig,
    seeds: &[u64],
) -> Vec<WindowPlan> {
    let mut rewards = Vec::with_capacity(pending.len());
    let mut partial = Vec::with_capacity(pending.len());
    for ((p, w), &seed) in pending.iter().zip(windows).zip(seeds) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let action = sample_action(&p.policy(), &mut rng);
        let direction = (cfg.input_grad > 0.0).then(|| super::terms::random_unit_direction(&mut rng, w.x.shape()));
        let adj: Vec<f64> = p
            .preds()
            .iter()
            .map(|&z| scaling.unscale_target(z) * head.grid[action])
            .collect();
        rewards.push(reward(cfg.reward, &adj, &w.targets_raw));
        partial.push((action, direction));
    }
    let adv = head.advantages(&rewards);
    partial
        .into_iter()
        .zip(adv)
        .map(|((action, direction), advantage)| WindowPlan {
            action,
            advantage,
            direction,
        })
        .collect()
}

/// Objective value and parameter gradient for one batch.
#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub total: f64,
    /// Mean per-window squared error.
    pub primary: f64,
    /// Mean policy entropy.
    pub entropy: f64,
    /// Mean policy-gradient surrogate.
    pub rl: f64,
    pub grads: Vec<Tensor>,
}

struct WindowValues {
    loss: f64,
    mse: f64,
    entropy: f64,
    rl: f64,
    grads: Vec<Tensor>,
}

fn finish_window(
    model: &HybridForecaster,
    mut p: PendingWindow,
    window: &WindowSample,
    plan: &WindowPlan,
    cfg: &LossConfig,
    weight: f64,
) -> Result<WindowValues> {
    let tape = &mut p.tape;
    let v = &p.vars;
    let fwd = &p.fwd;
    let mse = squared_error(tape, &fwd.preds, &window.targets)?;
    let mut loss = mse;
    if cfg.input_grad > 0.0 {
        let u = plan
            .direction
            .as_ref()
            .ok_or_else(|| Error::InvalidData("plan lacks a perturbation direction".into()))?;
        let mut x = window.x.clone();
        for (a, b) in x.data_mut().iter_mut().zip(u.data()) {
            *a += cfg.fd_eps * b;
        }
        let shifted = model.forward_features(tape, v, window, &x)?;
        let pen = finite_difference_sq(tape, &fwd.preds, &shifted.preds, cfg.fd_eps)?;
        let pen = tape.scale(pen, cfg.input_grad);
        loss = tape.add(loss, pen)?;
    }
    if cfg.smooth > 0.0 {
        if let Some(s) = smoothness(tape, &fwd.path)? {
            let s = tape.scale(s, cfg.smooth);
            loss = tape.add(loss, s)?;
        }
    }
    let rl = rl_term(tape, fwd.log_policy, plan.action, plan.advantage)?;
    if cfg.rl != 0.0 {
        let r = tape.scale(rl, cfg.rl);
        loss = tape.add(loss, r)?;
    }
    let ent = entropy(tape, fwd.log_policy)?;
    if cfg.entropy != 0.0 {
        let e = tape.scale(ent, cfg.entropy);
        loss = tape.add(loss, e)?;
    }
    let scaled = tape.scale(loss, weight);
    let g = tape.backward(scaled)?;
    Ok(WindowValues {
        loss: tape.value(scaled).item(),
        mse: tape.value(mse).item(),
        entropy: tape.value(ent).item(),
        rl: tape.value(rl).item(),
        grads: v.iter().map(|x| g.wrt(*x)).collect(),
    })
}

/// Completes every pending window with its plan and sums the per-window
/// contributions (each weighted `1/B`) in input order, then adds the L2 term.
pub fn finish_batch(
    model: &HybridForecaster,
    pending: Vec<PendingWindow>,
    windows: &[&WindowSample],
    plans: &[WindowPlan],
    cfg: &LossConfig,
) -> Result<BatchOutcome> {
    let b = windows.len();
    if b == 0 || pending.len() != b || plans.len() != b {
        return Err(Error::InvalidData("empty or misaligned batch".into()));
    }
    let weight = 1.0 / b as f64;
    let per: Vec<WindowValues> = pending
        .into_par_iter()
        .zip(windows.par_iter())
        .zip(plans.par_iter())
        .map(|((p, w), plan)| finish_window(model, p, w, plan, cfg, weight))
        .collect::<Result<_>>()?;

    let (l2, mut grads) = l2_penalty(model.params(), cfg.l2);
    let mut out = BatchOutcome {
        total: l2,
        primary: 0.0,
        entropy: 0.0,
        rl: 0.0,
        grads: Vec::new(),
    };
    for w in &per {
        out.total += w.loss;
        out.primary += w.mse * weight;
        out.entropy += w.entropy * weight;
        out.rl += w.rl * weight;
        for (acc, g) in grads.iter_mut().zip(&w.grads) {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
    out.grads = grads;
    Ok(out)
}

/// Objective without the flatness term for fixed plans.
pub fn base_objective(
    model: &HybridForecaster,
    windows: &[&WindowSample],
    plans: &[WindowPlan],
    cfg: &LossConfig,
) -> Result<BatchOutcome> {
    let pending = start_batch(model, windows)?;
    finish_batch(model, pending, windows, plans, cfg)
}

/// Adds `gamma ((L(theta + eps g_hat) - L(theta)) / eps)^2` with `g_hat` the
/// normalized current gradient held fixed.
pub fn apply_flatness(
    model: &HybridForecaster,
    windows: &[&WindowSample],
    plans: &[WindowPlan],
    cfg: &LossConfig,
    mut base: BatchOutcome,
) -> Result<BatchOutcome> {
    if cfg.flat == 0.0 {
        return Ok(base);
    }
    let norm = base.grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(base);
    }
    let eps = cfg.fd_eps;
    let mut shifted = model.clone();
    for (t, g) in shifted.params_mut().tensors_mut().iter_mut().zip(&base.grads) {
        for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
            *a += eps * b / norm;
        }
    }
    let moved = base_objective(&shifted, windows, plans, cfg)?;
    let diff = moved.total - base.total;
    base.total += cfg.flat * (diff / eps).powi(2);
    let k = cfg.flat * 2.0 * diff / (eps * eps);
    for (acc, g1) in base.grads.iter_mut().zip(&moved.grads) {
        for (a, b1) in acc.data_mut().iter_mut().zip(g1.data()) {
            *a += k * (b1 - *a);
        }
    }
    Ok(base)
}

/// Full composite objective for fixed plans.
pub fn batch_objective(
    model: &HybridForecaster,
    windows: &[&WindowSample],
    plans: &[WindowPlan],
    cfg: &LossConfig,
) -> Result<BatchOutcome> {
    let base = base_objective(model, windows, plans, cfg)?;
    apply_flatness(model, windows, plans, cfg, base)
}
