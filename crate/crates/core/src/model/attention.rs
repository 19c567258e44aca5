//! Time-aware attention from the final query position over earlier states.

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Recency/seasonality kernel applied to attention scores.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeKernel {
    /// `w(dt) = exp(-dt / tau) + beta_week * [dt % 7 == 0]`, multiplied into
    /// the exponentiated scores. `tau = None` is the `tau -> inf` limit.
    Multiplicative { tau: Option<f64>, beta_week: f64 },
    /// Explicit multiplicative weights, `weights[dt - 1]`.
    Table(Vec<f64>),
    /// Learned additive bias on the scores, `gamma[dt - 1]`.
    Additive { gamma: Vec<f64> },
}

/// Kernel value at lag `dt >= 1`.
pub fn kernel_weight(dt: usize, tau: Option<f64>, beta_week: f64) -> f64 {
    let decay = tau.map_or(1.0, |t| (-(dt as f64) / t).exp());
    let weekly = if dt.is_multiple_of(7) { beta_week } else { 0.0 };
    decay + weekly
}

/// Attention weights of query `q_t` over keys `k_1..k_{t-1}` (oldest first).
///
/// Returned weights align with `keys`; key `j` (0-based) sits at lag
/// `dt = keys.len() - j`. Positions `>= t` are not representable.
pub fn attention_weights(query: &[f64], keys: &[Vec<f64>], kernel: &TimeKernel) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::InvalidData(
            "attention needs at least one earlier position".into(),
        ));
    }
    let d = query.len() as f64;
    let n = keys.len();
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| query.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
        .collect();
    let dt = |j: usize| n - j;
    let logits: Vec<f64> = match kernel {
        TimeKernel::Additive { gamma } => scores
            .iter()
            .enumerate()
            .map(|(j, s)| s + gamma[dt(j) - 1])
            .collect(),
        _ => scores,
    };
    let weight = |j: usize| match kernel {
        TimeKernel::Multiplicative { tau, beta_week } => kernel_weight(dt(j), *tau, *beta_week),
        TimeKernel::Table(w) => w[dt(j) - 1],
        TimeKernel::Additive { .. } => 1.0,
    };
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(j, s)| (s - max).exp() * weight(j))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Learnable attention pieces bound to a tape.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub kernel: KernelVars,
}

#[derive(Clone, Copy, Debug)]
pub enum KernelVars {
    /// `log tau` and `log beta_week`, each `[1, 1]`.
    Multiplicative { log_tau: Var, log_beta: Var },
    /// `gamma` table `[L]`.
    Additive { gamma: Var },
}

/// Output of the tape attention: weights `[1, t-1]` and pooled values `[1, d_v]`.
pub struct AttentionOut {
    pub weights: Var,
    pub pooled: Var,
}

/// Attends from the last row of `states` (`[t, D]`, `t >= 2`) to rows `0..t-1`.
pub fn attend(tape: &mut Tape, states: Var, p: &AttentionVars) -> Result<AttentionOut> {
    let t = tape.shape(states)[0];
    if t < 2 {
        return Err(Error::InvalidData(
            "attention needs at least one earlier position".into(),
        ));
    }
    let n = t - 1;
    let last = tape.slice_rows(states, n, 1)?;
    let prev = tape.slice_rows(states, 0, n)?;
    let q = tape.matmul(last, p.wq)?;
    let k = tape.matmul(prev, p.wk)?;
    let v = tape.matmul(prev, p.wv)?;
    let d_k = tape.shape(q)[1] as f64;
    let kt = tape.transpose(k)?;
    let raw = tape.matmul(q, kt)?;
    let scores = tape.scale(raw, 1.0 / d_k.sqrt());
    let biased = match p.kernel {
        KernelVars::Multiplicative { log_tau, log_beta } => {
            let lags: Vec<f64> = (0..n).map(|j| -((n - j) as f64)).collect();
            let weekly: Vec<f64> = (0..n).map(|j| if (n - j).is_multiple_of(7) { 1.0 } else { 0.0 }).collect();
            let lags = tape.constant(Tensor::row(lags));
            let neg_log_tau = tape.scale(log_tau, -1.0);
            let inv_tau = tape.exp(neg_log_tau);
            let decay_arg = tape.matmul(inv_tau, lags)?;
            let decay = tape.exp(decay_arg);
            let beta = tape.exp(log_beta);
            let weekly = tape.constant(Tensor::row(weekly));
            let bump = tape.matmul(beta, weekly)?;
            let w = tape.add(decay, bump)?;
            let log_w = tape.log(w)?;
            tape.add(scores, log_w)?
        }
        KernelVars::Additive { gamma } => {
            let idx: Vec<usize> = (0..n).map(|j| n - j - 1).collect();
            let g = tape.gather(gamma, &idx)?;
            tape.add(scores, g)?
        }
    };
    let weights = tape.softmax(biased);
    let pooled = tape.matmul(weights, v)?;
    Ok(AttentionOut { weights, pooled })
}
