use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the policy head is rewarded for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Negative sMAPE of the adjusted forecast.
    #[default]
    Smape,
    /// Newsvendor profit of the adjusted forecast (`p = 1`, `c = 0.5`).
    Profit,
}

/// Coefficients of the composite objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// L2 weight decay `lambda`.
    pub l2: f64,
    /// Input-gradient penalty `alpha`.
    pub input_grad: f64,
    /// Temporal smoothness `beta`.
    pub smooth: f64,
    /// Policy-gradient weight `lambda_RL`.
    pub rl: f64,
    /// Entropy weight; negative values reward exploration.
    pub entropy: f64,
    /// Flatness weight on the squared parameter-gradient estimate.
    pub flat: f64,
    /// Finite-difference step for the input-gradient and flatness estimates.
    pub fd_eps: f64,
    /// Decay of the reward baseline moving average.
    pub baseline_decay: f64,
    /// Bounds of the multiplicative action grid.
    pub action_min: f64,
    pub action_max: f64,
    pub reward: RewardKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            input_grad: 1e-3,
            smooth: 1e-3,
            rl: 0.1,
            entropy: -0.01,
            flat: 0.0,
            fd_eps: 1e-3,
            baseline_decay: 0.99,
            action_min: 0.8,
            action_max: 1.25,
            reward: RewardKind::Smape,
        }
    }
}

impl LossConfig {
    /// Plain mean squared error.
    pub fn mse_only() -> Self {
        Self {
            l2: 0.0,
            input_grad: 0.0,
            smooth: 0.0,
            rl: 0.0,
            entropy: 0.0,
            flat: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("l2", self.l2),
            ("input_grad", self.input_grad),
            ("smooth", self.smooth),
            ("rl", self.rl),
            ("flat", self.flat),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("loss.{name} must be finite and >= 0, got {v}"));
            }
        }
        if !self.entropy.is_finite() {
            return bad("loss.entropy must be finite".into());
        }
        if !(self.fd_eps > 0.0 && self.fd_eps.is_finite()) {
            return bad(format!("loss.fd_eps must be > 0, got {}", self.fd_eps));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!("loss.baseline_decay must be in [0, 1), got {}", self.baseline_decay));
        }
        if !(self.action_min > 0.0 && self.action_min <= 1.0 && self.action_max >= 1.0) {
            return bad("action grid must satisfy 0 < action_min <= 1 <= action_max".into());
        }
        Ok(())
    }
}
