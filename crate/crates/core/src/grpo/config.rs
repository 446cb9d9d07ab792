use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate used for the 7B-parameter vision-language model. The toy
/// policy defaults to a larger rate.
pub const LARGE_MODEL_LEARNING_RATE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Responses sampled per prompt (N).
    pub rollouts: usize,
    /// Prompts per update.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// KL coefficient (β).
    pub beta: f64,
    /// Clip coefficient (ε).
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Divide advantages by the group standard deviation.
    pub normalize_advantage_std: bool,
    /// Gradient steps taken on each batch before the sampling policy is refreshed.
    pub updates_per_batch: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Gate answer-head features by the mentioned cues.
    pub grounding: bool,
    /// Drop spatial, geolocation and ranking tasks.
    pub disable_perceptual_data: bool,
    /// Drop counting and pattern tasks.
    pub disable_general_data: bool,
    /// Stop after this many steps (0 = no cap).
    pub max_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rollouts: 5,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            beta: 0.04,
            epsilon: 0.2,
            epochs: 4,
            seed: 0,
            normalize_advantage_std: false,
            updates_per_batch: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grounding: true,
            disable_perceptual_data: false,
            disable_general_data: false,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.rollouts < 2 {
            return fail(format!("rollouts must be >= 2, got {}", self.rollouts));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return fail(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.updates_per_batch == 0 {
            return fail("updates_per_batch must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}
