use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::numerics::{Tape, Tensor, Var};

use super::config::LossConfig;

/// Mean of `(pred - target)^2` over aligned `[1, 1]` predictions.
pub fn squared_error(tape: &mut Tape, preds: &[Var], targets: &[f64]) -> Result<Var> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let p = tape.concat_cols(preds)?;
    let y = tape.constant(Tensor::row(targets.to_vec()));
    let e = tape.sub(p, y)?;
    let sq = tape.square(e);
    Ok(tape.mean(sq))
}

/// `sum_k (path[k+1] - path[k])^2`; `None` for paths shorter than two.
pub fn smoothness(tape: &mut Tape, path: &[Var]) -> Result<Option<Var>> {
    if path.len() < 2 {
        return Ok(None);
    }
    let p = tape.concat_cols(path)?;
    let n = path.len();
    let idx_hi: Vec<usize> = (1..n).collect();
    let idx_lo: Vec<usize> = (0..n - 1).collect();
    let hi = tape.gather(p, &idx_hi)?;
    let lo = tape.gather(p, &idx_lo)?;
    let d = tape.sub(hi, lo)?;
    let sq = tape.square(d);
    Ok(Some(tape.sum(sq)))
}

/// `lambda * sum theta^2` and its gradient `2 lambda theta`.
pub fn l2_penalty(params: &ParamSet, lambda: f64) -> (f64, Vec<Tensor>) {
    let value = lambda * params.sum_sq();
    let grads = params.tensors().iter().map(|t| t.map(|v| 2.0 * lambda * v)).collect();
    (value, grads)
}

/// Mean over outputs of `((f(x + eps u) - f(x)) / eps)^2` given both
/// evaluations as aligned `[1, 1]` variables.
pub fn finite_difference_sq(tape: &mut Tape, base: &[Var], shifted: &[Var], eps: f64) -> Result<Var> {
    let b = tape.concat_cols(base)?;
    let s = tape.concat_cols(shifted)?;
    let d = tape.sub(s, b)?;
    let q = tape.scale(d, 1.0 / eps);
    let sq = tape.square(q);
    Ok(tape.mean(sq))
}

/// Seeded direction drawn uniformly from the unit sphere.
pub fn random_unit_direction(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return Tensor::new(shape.to_vec(), v.into_iter().map(|x| x / norm).collect()).expect("positive shape");
        }
    }
}

/// First-order estimate of the squared input gradient of `f` along `u`,
/// differentiable through both evaluations of `f`.
pub fn input_gradient_penalty<F>(tape: &mut Tape, mut f: F, x: &Tensor, u: &Tensor, eps: f64) -> Result<Var>
where
    F: FnMut(&mut Tape, &Tensor) -> Result<Vec<Var>>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be > 0, got {eps}")));
    }
    let base = f(tape, x)?;
    let mut shifted_x = x.clone();
    for (a, b) in shifted_x.data_mut().iter_mut().zip(u.data()) {
        *a += eps * b;
    }
    let shifted = f(tape, &shifted_x)?;
    finite_difference_sq(tape, &base, &shifted, eps)
}

/// `-log pi(a) * advantage`, with the advantage held constant.
pub fn rl_term(tape: &mut Tape, log_policy: Var, action: usize, advantage: f64) -> Result<Var> {
    let lp = tape.gather(log_policy, &[action])?;
    let s = tape.sum(lp);
    Ok(tape.scale(s, -advantage))
}

/// Shannon entropy of the distribution with log-probabilities `log_policy`.
pub fn entropy(tape: &mut Tape, log_policy: Var) -> Result<Var> {
    let p = tape.exp(log_policy);
    let plogp = tape.mul(p, log_policy)?;
    let s = tape.sum(plogp);
    Ok(tape.scale(s, -1.0))
}

fn mean_of(tape: &mut Tape, terms: Vec<Var>) -> Result<Var> {
    if terms.is_empty() {
        return Err(Error::InvalidData("empty batch".into()));
    }
    let n = terms.len() as f64;
    let mut acc = terms[0];
    for t in &terms[1..] {
        acc = tape.add(acc, *t)?;
    }
    Ok(tape.scale(acc, 1.0 / n))
}

/// `-mean(log pi(a_t | s_t) * A_t)` over a batch.
pub fn rl_policy_loss(tape: &mut Tape, log_policies: &[Var], actions: &[usize], advantages: &[f64]) -> Result<Var> {
    let terms = log_policies
        .iter()
        .zip(actions)
        .zip(advantages)
        .map(|((lp, a), adv)| rl_term(tape, *lp, *a, *adv))
        .collect::<Result<Vec<_>>>()?;
    mean_of(tape, terms)
}

/// Mean policy entropy over a batch.
pub fn entropy_bonus(tape: &mut Tape, log_policies: &[Var]) -> Result<Var> {
    let terms = log_policies.iter().map(|lp| entropy(tape, *lp)).collect::<Result<Vec<_>>>()?;
    mean_of(tape, terms)
}

/// Scalar parts of the composite objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub primary: f64,
    pub rl: f64,
    pub entropy: f64,
    pub flat: f64,
}

/// `primary + lambda_RL L_RL + lambda_ent H + gamma_flat F`.
pub fn total_loss(parts: &LossParts, cfg: &LossConfig) -> f64 {
    parts.primary + cfg.rl * parts.rl + cfg.entropy * parts.entropy + cfg.flat * parts.flat
}
