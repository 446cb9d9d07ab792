//! Flat key-value training configuration.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use urbanrl::grpo::TrainConfig;
use urbanrl::reward::{KeywordRewardSpec, RegressionRewardSpec, RewardConfig};

/// Every training, reward and ablation setting as one flat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub rollouts: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub normalize_advantage_std: bool,
    pub updates_per_batch: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grounding: bool,
    pub max_steps: u64,

    pub keywords: Vec<String>,
    pub lambda_base: f64,
    pub lambda_k: Vec<f64>,
    pub lambda_loc: f64,
    pub location_token: String,
    pub delta: f64,
    pub alpha: f64,

    pub disable_keyword_reward: bool,
    pub disable_regression_reward: bool,
    pub disable_perceptual_data: bool,
    pub disable_general_data: bool,

    /// Save resumable state every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self::from_parts(&TrainConfig::default(), &RewardConfig::default(), 0)
    }
}

impl TrainFile {
    pub fn from_parts(t: &TrainConfig, r: &RewardConfig, checkpoint_every: u64) -> Self {
        Self {
            rollouts: t.rollouts,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta: t.beta,
            epsilon: t.epsilon,
            epochs: t.epochs,
            seed: t.seed,
            normalize_advantage_std: t.normalize_advantage_std,
            updates_per_batch: t.updates_per_batch,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            grounding: t.grounding,
            max_steps: t.max_steps,
            keywords: r.keyword.keywords.clone(),
            lambda_base: r.keyword.lambda_base,
            lambda_k: r.keyword.lambda_k.clone(),
            lambda_loc: r.keyword.lambda_loc,
            location_token: r.keyword.location_token.clone(),
            delta: r.regression.delta,
            alpha: r.regression.alpha,
            disable_keyword_reward: r.disable_keyword_reward,
            disable_regression_reward: r.disable_regression_reward,
            disable_perceptual_data: t.disable_perceptual_data,
            disable_general_data: t.disable_general_data,
            checkpoint_every,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rollouts: self.rollouts,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta: self.beta,
            epsilon: self.epsilon,
            epochs: self.epochs,
            seed: self.seed,
            normalize_advantage_std: self.normalize_advantage_std,
            updates_per_batch: self.updates_per_batch,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            grounding: self.grounding,
            disable_perceptual_data: self.disable_perceptual_data,
            disable_general_data: self.disable_general_data,
            max_steps: self.max_steps,
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            keyword: KeywordRewardSpec {
                keywords: self.keywords.clone(),
                lambda_base: self.lambda_base,
                lambda_k: self.lambda_k.clone(),
                lambda_loc: self.lambda_loc,
                location_token: self.location_token.clone(),
            },
            regression: RegressionRewardSpec { delta: self.delta, alpha: self.alpha },
            disable_keyword_reward: self.disable_keyword_reward,
            disable_regression_reward: self.disable_regression_reward,
        }
    }
}

/// Reads a TOML file, or returns the default when no path is given.
pub fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_parts() {
        let f = TrainFile::default();
        let back = TrainFile::from_parts(&f.train_config(), &f.reward_config(), 0);
        assert_eq!(f, back);
        assert_eq!(f.train_config(), TrainConfig::default());
        assert_eq!(f.reward_config(), RewardConfig::default());
    }

    #[test]
    fn partial_file_keeps_defaults_and_rejects_typos() {
        let f: TrainFile = toml::from_str("learning_rate = 0.05\ndisable_keyword_reward = true\n").unwrap();
        assert_eq!(f.learning_rate, 0.05);
        assert!(f.reward_config().disable_keyword_reward);
        assert_eq!(f.rollouts, 5);
        assert!(toml::from_str::<TrainFile>("learnin_rate = 1.0").is_err());
    }

    #[test]
    fn serialized_defaults_parse_back() {
        let text = toml::to_string(&TrainFile::default()).unwrap();
        assert_eq!(toml::from_str::<TrainFile>(&text).unwrap(), TrainFile::default());
    }
}
