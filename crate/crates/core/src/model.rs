//! Shared domain types and the structured-response parser.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Number of indicator bins; answers for indicator tasks live in `1..=N_BINS`.
pub const N_BINS: u32 = 10;

/// One spatial unit. `features` stands in for the unit's imagery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_id: String,
    pub city: String,
    pub features: Vec<f64>,
    pub indicators: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    InDomain,
    UnseenCity,
    UnseenIndicator,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::InDomain,
        Category::UnseenCity,
        Category::UnseenIndicator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::InDomain => "in_domain",
            Category::UnseenCity => "unseen_city",
            Category::UnseenIndicator => "unseen_indicator",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Indicator,
    SpatialTriplet,
    Geolocation,
    Ranking,
    Counting,
    Pattern,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Indicator,
        TaskKind::SpatialTriplet,
        TaskKind::Geolocation,
        TaskKind::Ranking,
        TaskKind::Counting,
        TaskKind::Pattern,
    ];

    /// Format/accuracy reward pairing for each data type.
    pub fn reward_spec(self) -> RewardSpec {
        match self {
            TaskKind::Indicator => RewardSpec::KeywordRegression,
            TaskKind::Counting => RewardSpec::StandardRegression,
            TaskKind::SpatialTriplet
            | TaskKind::Geolocation
            | TaskKind::Ranking
            | TaskKind::Pattern => RewardSpec::StandardStandard,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Indicator => "indicator",
            TaskKind::SpatialTriplet => "spatial_triplet",
            TaskKind::Geolocation => "geolocation",
            TaskKind::Ranking => "ranking",
            TaskKind::Counting => "counting",
            TaskKind::Pattern => "pattern",
        }
    }

    pub fn is_perceptual(self) -> bool {
        matches!(
            self,
            TaskKind::SpatialTriplet | TaskKind::Geolocation | TaskKind::Ranking
        )
    }

    pub fn is_general(self) -> bool {
        matches!(self, TaskKind::Counting | TaskKind::Pattern)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSpec {
    KeywordRegression,
    StandardStandard,
    StandardRegression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Bin(u32),
    Label(String),
    Count(u64),
}

impl Answer {
    pub fn canonical(&self) -> String {
        match self {
            Answer::Bin(b) => b.to_string(),
            Answer::Label(s) => s.clone(),
            Answer::Count(c) => c.to_string(),
        }
    }

    /// Numeric value for regression-style scoring, if the answer is numeric.
    pub fn numeric(&self) -> Option<f64> {
        match self {
            Answer::Bin(b) => Some(*b as f64),
            Answer::Count(c) => Some(*c as f64),
            Answer::Label(_) => None,
        }
    }
}

/// One prompt. `options` lists every answer string the policy may emit, in
/// answer-head index order. `features` is set only for synthetic scenes that
/// are not backed by a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub kind: TaskKind,
    pub region_refs: Vec<String>,
    pub question: String,
    pub gold: Answer,
    pub reward_spec: RewardSpec,
    #[serde(default)]
    pub category: Option<Category>,
    #[serde(default)]
    pub indicator: Option<String>,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl TaskInstance {
    /// Checks the kind/reward-spec pairing and the gold answer's type and range.
    pub fn validate(&self) -> Result<()> {
        if self.kind.reward_spec() != self.reward_spec {
            return Err(Error::RewardSpecMismatch {
                kind: self.kind,
                spec: self.reward_spec,
            });
        }
        let ok = match (&self.kind, &self.gold) {
            (TaskKind::Indicator, Answer::Bin(b)) => (1..=N_BINS).contains(b),
            (TaskKind::Counting, Answer::Count(_)) => true,
            (TaskKind::Indicator | TaskKind::Counting, _) => false,
            (_, Answer::Label(_)) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!(
                "task {}: gold {:?} does not fit kind {}",
                self.task_id, self.gold, self.kind
            )));
        }
        if !self.options.contains(&self.gold.canonical()) {
            return Err(Error::Config(format!(
                "task {}: gold `{}` not among options",
                self.task_id,
                self.gold.canonical()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub raw: String,
    pub think: Option<String>,
    pub answer_span: Option<String>,
    pub well_formed: bool,
}

fn segment<'a>(s: &'a str, open: &str, close: &str) -> Option<(usize, &'a str, usize)> {
    let start = s.find(open)?;
    let body_start = start + open.len();
    let body_len = s[body_start..].find(close)?;
    Some((start, &s[body_start..body_start + body_len], body_start + body_len + close.len()))
}

/// Parses a `<think>…</think><answer>…</answer>` response.
///
/// Spans are extracted from the first opening delimiter up to the next closing
/// one, whether or not the response is well formed. A response is well formed
/// only when each delimiter occurs exactly once, the think segment precedes the
/// answer segment, nothing but whitespace surrounds them, and the answer is not
/// blank.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let think = segment(raw, THINK_OPEN, THINK_CLOSE);
    let answer = segment(raw, ANSWER_OPEN, ANSWER_CLOSE);

    let well_formed = match (think, answer) {
        (Some((t_start, _, t_end)), Some((a_start, body, a_end))) => {
            let single = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE]
                .iter()
                .all(|d| raw.matches(d).count() == 1);
            single
                && t_end <= a_start
                && raw[..t_start].trim().is_empty()
                && raw[t_end..a_start].trim().is_empty()
                && raw[a_end..].trim().is_empty()
                && !body.trim().is_empty()
        }
        _ => false,
    };

    ParsedResponse {
        raw: raw.to_owned(),
        think: think.map(|(_, body, _)| body.to_owned()),
        answer_span: answer.map(|(_, body, _)| body.to_owned()),
        well_formed,
    }
}

/// First integer token (optionally signed) inside the answer span. No range check.
pub fn extract_numeric_answer(p: &ParsedResponse) -> Option<i64> {
    let span = p.answer_span.as_deref()?;
    let bytes = span.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |n| start + n);
    let signed = start > 0 && bytes[start - 1] == b'-';
    let token = if signed { &span[start - 1..end] } else { &span[start..end] };
    token.parse().ok()
}
