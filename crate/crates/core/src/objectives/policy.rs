use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{smape, CpoiParams};

use super::config::{LossConfig, RewardKind};

/// `k` multiplicative adjustments spaced log-uniformly over `[lo, hi]`, with
/// the point closest to 1 set to exactly 1.
pub fn action_grid(k: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidConfig("action grid needs at least 2 points".into()));
    }
    if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
        return Err(Error::InvalidConfig(format!("action grid [{lo}, {hi}] must bracket 1")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut grid: Vec<f64> = (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect();
    let closest = (0..k)
        .min_by(|&i, &j| (grid[i].ln().abs()).total_cmp(&grid[j].ln().abs()))
        .unwrap_or(0);
    grid[closest] = 1.0;
    Ok(grid)
}

/// Action grid plus the running reward baseline. The logit weights live in
/// the model's parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyHead {
    pub grid: Vec<f64>,
    /// `None` until the first batch sets it to that batch's mean reward.
    pub baseline: Option<f64>,
    pub decay: f64,
}

impl PolicyHead {
    pub fn new(k: usize, cfg: &LossConfig) -> Result<Self> {
        Ok(Self {
            grid: action_grid(k, cfg.action_min, cfg.action_max)?,
            baseline: None,
            decay: cfg.baseline_decay,
        })
    }

    pub fn identity_action(&self) -> usize {
        self.grid.iter().position(|&g| g == 1.0).unwrap_or(0)
    }

    /// Advantages `R_t - R_hat` for a batch, then folds the batch mean into
    /// the baseline.
    pub fn advantages(&mut self, rewards: &[f64]) -> Vec<f64> {
        if rewards.is_empty() {
            return Vec::new();
        }
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let base = self.baseline.unwrap_or(mean);
        let adv = rewards.iter().map(|r| r - base).collect();
        self.baseline = Some(match self.baseline {
            None => mean,
            Some(b) => self.decay * b + (1.0 - self.decay) * mean,
        });
        adv
    }
}

/// Draws an index from a discrete distribution.
pub fn sample_action(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Reward of forecasting `adjusted` against `actual`, both in original units.
pub fn reward(kind: RewardKind, adjusted: &[f64], actual: &[f64]) -> f64 {
    match kind {
        RewardKind::Smape => -smape(adjusted, actual),
        RewardKind::Profit => {
            let p = CpoiParams::default();
            adjusted.iter().zip(actual).map(|(a, y)| p.profit(*a, *y)).sum()
        }
    }
}
