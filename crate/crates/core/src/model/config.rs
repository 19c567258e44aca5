use serde::{Deserialize, Serialize};

use crate::dataset::feature;
use crate::error::{Error, Result};
use crate::numerics::Unary;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// Softmax scores reweighted by a decay-plus-weekly time kernel.
    #[default]
    Multiplicative,
    /// Learned bias per time lag added to the scores.
    Additive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStrategy {
    /// One head evaluation per horizon with its embedding.
    #[default]
    Direct,
    /// Chained one-step predictions fed back as observations.
    Recursive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsTcnConfig {
    pub kernel_widths: Vec<usize>,
    pub branch_channels: usize,
    pub activation: Unary,
    pub projection_width: usize,
}

impl Default for MsTcnConfig {
    fn default() -> Self {
        Self {
            kernel_widths: vec![1, 2, 3],
            branch_channels: 8,
            activation: Unary::Tanh,
            projection_width: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub n_features: usize,
    pub n_countries: usize,
    pub country_dim: usize,
    pub mstcn: MsTcnConfig,
    pub hidden: usize,
    /// Nonlinearity applied to the gated candidate.
    pub phi: Unary,
    pub attention: AttentionVariant,
    pub d_k: usize,
    pub d_v: usize,
    pub horizon_dim: usize,
    pub head_hidden: usize,
    pub decode: DecodeStrategy,
    /// Size of the policy head's action grid.
    pub policy_actions: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 28,
            horizons: vec![1, 7, 14],
            n_features: feature::COUNT,
            n_countries: 1,
            country_dim: 2,
            mstcn: MsTcnConfig::default(),
            hidden: 16,
            phi: Unary::Tanh,
            attention: AttentionVariant::Multiplicative,
            d_k: 8,
            d_v: 16,
            horizon_dim: 4,
            head_hidden: 16,
            decode: DecodeStrategy::Direct,
            policy_actions: 11,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let w = &self.mstcn.kernel_widths;
        if w.is_empty() || w.contains(&0) {
            return bad("kernel widths must be nonempty and >= 1");
        }
        let mut sorted = w.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != w.len() {
            return bad("kernel widths must be distinct");
        }
        if self.lookback == 0 || self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("lookback and horizons must be positive");
        }
        for (name, v) in [
            ("n_features", self.n_features),
            ("n_countries", self.n_countries),
            ("country_dim", self.country_dim),
            ("branch_channels", self.mstcn.branch_channels),
            ("projection_width", self.mstcn.projection_width),
            ("hidden", self.hidden),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("horizon_dim", self.horizon_dim),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.policy_actions < 2 {
            return bad("policy head needs at least 2 actions");
        }
        if self.decode == DecodeStrategy::Recursive && !self.horizons.contains(&1) {
            return bad("recursive decoding requires horizon 1");
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    /// Width of the pooled context vector: attention output plus final state.
    pub fn context_dim(&self) -> usize {
        self.d_v + self.hidden
    }
}
