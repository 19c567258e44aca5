//! The hybrid forecaster: multi-scale causal convolution, dynamic gating
//! recurrence and time-aware attention feeding a horizon-embedded head.

mod attention;
mod cell;
mod config;
mod forecaster;
mod mstcn;
mod params;

pub use attention::{attend, attention_weights, kernel_weight, AttentionOut, AttentionVars, KernelVars, TimeKernel};
pub use cell::{cell_step, CellStep, CellVars};
pub use config::{AttentionVariant, DecodeStrategy, ModelConfig, MsTcnConfig};
pub use forecaster::{input_width, Encoded, HybridForecaster, WindowForward};
pub use mstcn::{ms_tcn_forward, MsTcnVars};
pub use params::{glorot_bound, ParamSet};
