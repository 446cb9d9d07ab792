use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{parse_response, TaskInstance};
use crate::policy::{PolicyGrad, PolicyParams, ResponseTrace};
use crate::reward::{total_reward, RewardConfig};

/// One prompt's sampled responses with rewards, advantages and the log-probabilities
/// under the sampling and reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub task: TaskInstance,
    pub traces: Vec<ResponseTrace>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
}

/// `r_j - mean(r)`, optionally divided by the group standard deviation.
pub fn advantages(rewards: &[f64], normalize_std: bool) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    if !normalize_std {
        return centered;
    }
    let std = (centered.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    centered.into_iter().map(|a| a / (std + 1e-8)).collect()
}

pub fn ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).exp()
}

/// Non-negative per-sample KL estimate `exp(d) - d - 1` with `d = logp_ref - logp_new`.
pub fn kl_estimate(logp_ref: f64, logp_new: f64) -> f64 {
    let d = logp_ref - logp_new;
    d.exp_m1() - d
}

/// Samples `n` responses from `policy`, scores them and computes advantages.
#[allow(clippy::too_many_arguments)]
pub fn generate_group(
    policy: &PolicyParams,
    ref_policy: &PolicyParams,
    task: &TaskInstance,
    features: &[f64],
    n: usize,
    rng: &mut impl Rng,
    reward_cfg: &RewardConfig,
    normalize_std: bool,
) -> Result<RolloutGroup> {
    if n < 2 {
        return Err(Error::Config(format!("rollout group size must be >= 2, got {n}")));
    }
    let mut traces = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut logp_ref = Vec::with_capacity(n);
    for _ in 0..n {
        let trace = policy.sample_response(features, &task.options, rng)?;
        let breakdown = total_reward(task, &parse_response(&trace.rendered), reward_cfg)?;
        rewards.push(breakdown.total);
        logp_ref.push(ref_policy.log_prob(features, &trace)?);
        traces.push(trace);
    }
    let logp_old = traces.iter().map(|t| t.logp_total).collect();
    Ok(RolloutGroup {
        task: task.clone(),
        advantages: advantages(&rewards, normalize_std),
        traces,
        rewards,
        logp_old,
        logp_ref,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOutput {
    pub objective: f64,
    pub grad: PolicyGrad,
    /// Fraction of samples whose clipped branch is active.
    pub clip_fraction: f64,
    pub mean_kl: f64,
}

/// Clipped-ratio objective with KL penalty for one group, and its gradient.
///
/// A sample contributes no surrogate gradient when its clipped branch is the
/// strict minimum, i.e. `A > 0` with `s > 1 + ε` or `A < 0` with `s < 1 - ε`.
pub fn grpo_objective(
    group: &RolloutGroup,
    params: &PolicyParams,
    epsilon: f64,
    beta: f64,
    features: &[f64],
) -> Result<ObjectiveOutput> {
    let n = group.traces.len();
    if n == 0 {
        return Err(Error::Empty("rollout group"));
    }
    let mut grad = PolicyGrad::zeros_like(params);
    let mut objective = 0.0;
    let mut clipped = 0usize;
    let mut kl_sum = 0.0;
    for j in 0..n {
        let trace = &group.traces[j];
        let a = group.advantages[j];
        let logp = params.log_prob(features, trace)?;
        let s = ratio(logp, group.logp_old[j]);
        let s_clip = s.clamp(1.0 - epsilon, 1.0 + epsilon);
        let surrogate = (s * a).min(s_clip * a);
        let kl = kl_estimate(group.logp_ref[j], logp);
        objective += surrogate - beta * kl;
        kl_sum += kl;

        let clip_active = (a > 0.0 && s > 1.0 + epsilon) || (a < 0.0 && s < 1.0 - epsilon);
        if clip_active {
            clipped += 1;
        }
        // d/dlogp of the per-sample term
        let d_surrogate = if clip_active { 0.0 } else { a * s };
        let d_kl = 1.0 - (group.logp_ref[j] - logp).exp();
        let coeff = d_surrogate - beta * d_kl;
        if coeff != 0.0 {
            grad.add_scaled(&params.log_prob_grad(features, trace)?, coeff / n as f64);
        }
    }
    Ok(ObjectiveOutput {
        objective: objective / n as f64,
        grad,
        clip_fraction: clipped as f64 / n as f64,
        mean_kl: kl_sum / n as f64,
    })
}
