//! Group-relative policy optimization.
//!
//! Per prompt, `N` responses are sampled, scored with the verifiable rewards and
//! given mean-subtracted advantages. The policy ascends
//!
//! ```text
//! J = 1/N Σ_j [ min(s_j A_j, clip(s_j, 1-ε, 1+ε) A_j) - β k3_j ]
//! ```
//!
//! where `s_j` is the importance ratio against the sampling policy and `k3_j`
//! the per-sample KL estimate against the frozen reference policy.

mod config;
mod objective;
mod optim;
mod train;

pub use config::{TrainConfig, LARGE_MODEL_LEARNING_RATE};
pub use objective::{
    advantages, generate_group, grpo_objective, kl_estimate, ratio, ObjectiveOutput, RolloutGroup,
};
pub use optim::{update_params, AdamState};
pub use train::{prepare_tasks, required_outputs, PreparedTask, TrainMetrics, TrainState, Trainer};
