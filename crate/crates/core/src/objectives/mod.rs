//! The composite training objective: squared error with weight decay,
//! input-gradient and smoothness penalties, a policy-gradient term with an
//! entropy bonus, and an optional flatness term.

mod batch;
mod config;
mod policy;
mod terms;

pub use batch::{
    apply_flatness, base_objective, batch_objective, finish_batch, plan_batch, start_batch, BatchOutcome,
    PendingWindow, WindowPlan,
};
pub use config::{LossConfig, RewardKind};
pub use policy::{action_grid, reward, sample_action, PolicyHead};
pub use terms::{
    entropy, entropy_bonus, finite_difference_sq, input_gradient_penalty, l2_penalty, random_unit_direction,
    rl_policy_loss, rl_term, smoothness, squared_error, total_loss, LossParts,
};
