use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureScaling, WindowSample};
use crate::error::{Error, Result};
use crate::model::{HybridForecaster, ParamSet};
use crate::objectives::{apply_flatness, finish_batch, plan_batch, start_batch, LossConfig, PolicyHead};

use super::optimizer::{adam_step, OptimizerState, TrainConfig};

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// 1-based optimizer step.
    pub iteration: usize,
    pub train_total: f64,
    pub train_primary: f64,
    pub val_primary: Option<f64>,
    pub entropy: f64,
    pub wall_ms: u64,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Optimizer steps taken so far.
    pub iteration: usize,
    /// Current (not best) parameters.
    pub params: ParamSet,
    pub optimizer: OptimizerState,
    pub policy: PolicyHead,
    pub best_val: f64,
    pub best_iteration: usize,
    pub best_params: ParamSet,
    pub stopped: bool,
}

pub struct TrainOutcome {
    /// Best-validation model.
    pub model: HybridForecaster,
    pub history: Vec<HistoryRow>,
    pub state: TrainState,
}

/// Mixes a tuple of integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shuffled order of `n` windows for `epoch`.
pub fn epoch_permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, epoch]));
    idx.shuffle(&mut rng);
    idx
}

/// Window indices of batch `iteration` (0-based): consecutive slots of the
/// concatenated per-epoch permutations.
pub fn batch_indices(seed: u64, iteration: usize, batch: usize, n: usize) -> Vec<usize> {
    let start = iteration * batch;
    let mut out = Vec::with_capacity(batch);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for pos in start..start + batch {
        let epoch = pos / n;
        if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
            cached = Some((epoch, epoch_permutation(seed, epoch as u64, n)));
        }
        out.push(cached.as_ref().unwrap().1[pos % n]);
    }
    out
}

/// Mean per-window squared error in scaled space over an evenly strided
/// subsample of at most `cap` windows.
pub fn validation_loss(model: &HybridForecaster, windows: &[WindowSample], cap: usize) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidData("no validation windows".into()));
    }
    let stride = windows.len().div_ceil(cap);
    let picked: Vec<&WindowSample> = windows.iter().step_by(stride).collect();
    let errs = picked
        .par_iter()
        .map(|w| {
            let p = model.forecast_scaled(w)?;
            Ok(p.iter().zip(&w.targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Mini-batch training with early stopping on validation squared error.
/// Passing `resume` continues a previous run bit-for-bit.
pub fn train(
    model: HybridForecaster,
    train: &[WindowSample],
    val: &[WindowSample],
    scaling: &FeatureScaling,
    loss: &LossConfig,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit {
            train: train.len(),
            val: val.len(),
            test: 0,
        });
    }
    let mut state = match resume {
        Some(s) => s,
        None => TrainState {
            iteration: 0,
            optimizer: OptimizerState::new(model.params()),
            policy: PolicyHead::new(model.config().policy_actions, loss)?,
            best_val: f64::INFINITY,
            best_iteration: 0,
            best_params: model.params().clone(),
            params: model.params().clone(),
            stopped: false,
        },
    };
    let mut current = HybridForecaster::from_params(model.config().clone(), state.params.clone())?;
    let mut history = Vec::new();
    let clock = Instant::now();
    let mut checked = state.best_val.is_finite();

    while !state.stopped && state.iteration < cfg.max_iterations {
        let it = state.iteration;
        let idx = batch_indices(cfg.seed, it, cfg.batch_size, train.len());
        let batch: Vec<&WindowSample> = idx.iter().map(|&i| &train[i]).collect();
        let seeds: Vec<u64> = (0..batch.len())
            .map(|k| derive_seed(&[cfg.seed, it as u64, k as u64]))
            .collect();

        let pending = start_batch(&current, &batch)?;
        let plans = plan_batch(&mut state.policy, &pending, &batch, scaling, loss, &seeds);
        let base = finish_batch(&current, pending, &batch, &plans, loss)?;
        let mut out = apply_flatness(&current, &batch, &plans, loss, base)?;
        if !out.total.is_finite() {
            return Err(Error::NonFiniteLoss(it + 1));
        }
        adam_step(current.params_mut(), &mut out.grads, &mut state.optimizer, cfg)?;
        state.iteration += 1;

        let mut val_primary = None;
        if state.iteration % cfg.val_every == 0 {
            let v = validation_loss(&current, val, cfg.val_max_windows)?;
            val_primary = Some(v);
            checked = true;
            if v < state.best_val {
                state.best_val = v;
                state.best_iteration = state.iteration;
                state.best_params = current.params().clone();
            } else if state.iteration - state.best_iteration >= cfg.patience {
                state.stopped = true;
            }
        }
        history.push(HistoryRow {
            iteration: state.iteration,
            train_total: out.total,
            train_primary: out.primary,
            val_primary,
            entropy: out.entropy,
            wall_ms: clock.elapsed().as_millis() as u64,
        });
    }
    if !checked {
        state.best_params = current.params().clone();
    }
    state.params = current.params().clone();
    let best = HybridForecaster::from_params(model.config().clone(), state.best_params.clone())?;
    Ok(TrainOutcome {
        model: best,
        history,
        state,
    })
}

/// Writes `iteration,train_total,train_primary,val_primary,entropy,wall_ms`.
pub fn write_history(rows: &[HistoryRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "train_total", "train_primary", "val_primary", "entropy", "wall_ms"])?;
    for r in rows {
        out.write_record([
            r.iteration.to_string(),
            r.train_total.to_string(),
            r.train_primary.to_string(),
            r.val_primary.map(|v| v.to_string()).unwrap_or_default(),
            r.entropy.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
