//! Verifiable rewards.
//!
//! Every task earns a format component and an accuracy component, summed with
//! unit weights. Indicator tasks pair the keyword reward with the Huber-exponential
//! regression reward, counting tasks pair the standard format reward with the
//! regression reward, and the remaining kinds use the standard pair.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::KEYWORDS;
use crate::error::{Error, Result};
use crate::model::{extract_numeric_answer, Answer, ParsedResponse, TaskInstance, TaskKind, N_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeywordRewardSpec {
    pub keywords: Vec<String>,
    pub lambda_base: f64,
    /// Weight per keyword, parallel to `keywords`.
    pub lambda_k: Vec<f64>,
    pub lambda_loc: f64,
    pub location_token: String,
}

impl Default for KeywordRewardSpec {
    fn default() -> Self {
        Self {
            keywords: KEYWORDS.iter().map(|s| s.to_string()).collect(),
            lambda_base: 0.4,
            lambda_k: vec![0.075; KEYWORDS.len()],
            lambda_loc: 0.15,
            location_token: "location".into(),
        }
    }
}

impl KeywordRewardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.keywords.len() != self.lambda_k.len() {
            return Err(Error::Config(format!(
                "{} keywords but {} keyword weights",
                self.keywords.len(),
                self.lambda_k.len()
            )));
        }
        let weights = std::iter::once(self.lambda_base)
            .chain(self.lambda_k.iter().copied())
            .chain(std::iter::once(self.lambda_loc));
        for w in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("keyword weight {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Largest attainable keyword reward.
    pub fn max_reward(&self) -> f64 {
        self.lambda_base + self.lambda_k.iter().sum::<f64>() + self.lambda_loc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionRewardSpec {
    /// Huber knee, in bin units.
    pub delta: f64,
    /// Decay rate of the exponential.
    pub alpha: f64,
}

impl Default for RegressionRewardSpec {
    fn default() -> Self {
        Self { delta: 1.0, alpha: 1.0 }
    }
}

impl RegressionRewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub keyword: KeywordRewardSpec,
    pub regression: RegressionRewardSpec,
    /// Indicator tasks fall back to the standard format reward.
    pub disable_keyword_reward: bool,
    /// Indicator and counting tasks fall back to the standard accuracy reward.
    pub disable_regression_reward: bool,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        self.keyword.validate()?;
        self.regression.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_component: f64,
    pub accuracy_component: f64,
    pub total: f64,
    pub matched_keywords: BTreeSet<String>,
    pub notes: Vec<String>,
}

/// Keywords (and the location token, if present) occurring anywhere in the
/// response, compared case-insensitively.
pub fn matched_keywords(raw: &str, spec: &KeywordRewardSpec) -> BTreeSet<String> {
    let hay = raw.to_lowercase();
    spec.keywords
        .iter()
        .chain(std::iter::once(&spec.location_token))
        .filter(|k| hay.contains(&k.to_lowercase()))
        .cloned()
        .collect()
}

pub fn keyword_reward(p: &ParsedResponse, spec: &KeywordRewardSpec) -> f64 {
    let hay = p.raw.to_lowercase();
    let hit = |k: &str| hay.contains(&k.to_lowercase());
    let mut r = if p.well_formed { spec.lambda_base } else { 0.0 };
    for (k, w) in spec.keywords.iter().zip(&spec.lambda_k) {
        if hit(k) {
            r += w;
        }
    }
    if hit(&spec.location_token) {
        r += spec.lambda_loc;
    }
    r
}

pub fn huber(error: f64, delta: f64) -> f64 {
    let a = error.abs();
    if a <= delta {
        0.5 * error * error
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// `exp(-alpha * huber(pred - truth, delta))`, in `(0, 1]`.
pub fn regression_reward(y_pred: f64, y_true: f64, spec: &RegressionRewardSpec) -> f64 {
    (-spec.alpha * huber(y_pred - y_true, spec.delta)).exp()
}

pub fn standard_format_reward(p: &ParsedResponse) -> f64 {
    if p.well_formed {
        1.0
    } else {
        0.0
    }
}

pub fn standard_accuracy_reward(p: &ParsedResponse, gold: &Answer) -> f64 {
    let correct = match gold {
        Answer::Bin(b) => extract_numeric_answer(p) == Some(*b as i64),
        other => p
            .answer_span
            .as_deref()
            .is_some_and(|s| s.trim() == other.canonical()),
    };
    if correct {
        1.0
    } else {
        0.0
    }
}

fn numeric_accuracy(
    p: &ParsedResponse,
    gold: f64,
    range: Option<(i64, i64)>,
    spec: &RegressionRewardSpec,
    notes: &mut Vec<String>,
) -> f64 {
    match extract_numeric_answer(p) {
        None => {
            notes.push("answer is not a parseable integer; accuracy 0".into());
            0.0
        }
        Some(v) if range.is_some_and(|(lo, hi)| v < lo || v > hi) => {
            let (lo, hi) = range.unwrap_or_default();
            notes.push(format!("answer {v} outside [{lo}, {hi}]; accuracy 0"));
            0.0
        }
        Some(v) => regression_reward(v as f64, gold, spec),
    }
}

/// Reward for one response to one task.
pub fn total_reward(
    task: &TaskInstance,
    p: &ParsedResponse,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    if task.kind.reward_spec() != task.reward_spec {
        return Err(Error::RewardSpecMismatch {
            kind: task.kind,
            spec: task.reward_spec,
        });
    }
    let mut notes = Vec::new();
    let (format_component, accuracy_component) = match (task.kind, &task.gold) {
        (TaskKind::Indicator, Answer::Bin(bin)) => {
            let format = if cfg.disable_keyword_reward {
                standard_format_reward(p)
            } else {
                keyword_reward(p, &cfg.keyword)
            };
            let accuracy = if cfg.disable_regression_reward {
                standard_accuracy_reward(p, &task.gold)
            } else {
                numeric_accuracy(p, *bin as f64, Some((1, N_BINS as i64)), &cfg.regression, &mut notes)
            };
            (format, accuracy)
        }
        (TaskKind::Counting, Answer::Count(count)) => {
            let accuracy = if cfg.disable_regression_reward {
                standard_accuracy_reward(p, &task.gold)
            } else {
                numeric_accuracy(p, *count as f64, Some((0, i64::MAX)), &cfg.regression, &mut notes)
            };
            (standard_format_reward(p), accuracy)
        }
        (TaskKind::Indicator | TaskKind::Counting, gold) => {
            return Err(Error::Config(format!(
                "task {}: gold {gold:?} does not fit kind {}",
                task.task_id, task.kind
            )))
        }
        (_, gold) => (standard_format_reward(p), standard_accuracy_reward(p, gold)),
    };
    let matched = if task.kind == TaskKind::Indicator && !cfg.disable_keyword_reward {
        matched_keywords(&p.raw, &cfg.keyword)
    } else {
        BTreeSet::new()
    };
    Ok(RewardBreakdown {
        format_component,
        accuracy_component,
        total: format_component + accuracy_component,
        matched_keywords: matched,
        notes,
    })
}
