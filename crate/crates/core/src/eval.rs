//! R² evaluation and report rendering.
//!
//! Reports hold raw R² values; values below −1 are clipped to −1 only in the
//! dedicated clipped column. The overall score is the unweighted mean of the
//! per-row raw R² values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{task_features, RegionIndex};
use crate::error::{Error, Result};
use crate::model::{Answer, Category, Region, TaskInstance, TaskKind};
use crate::par::Executor;
use crate::policy::PolicyParams;

pub const R2_CLIP_FLOOR: f64 = -1.0;

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(preds: &[f64], golds: &[f64]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch(preds.len(), golds.len()));
    }
    if golds.is_empty() {
        return Err(Error::Empty("R² inputs"));
    }
    let mean = golds.iter().sum::<f64>() / golds.len() as f64;
    let ss_tot: f64 = golds.iter().map(|g| (g - mean) * (g - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let ss_res: f64 = golds.iter().zip(preds).map(|(g, p)| (g - p) * (g - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn clip_r2(r2: f64) -> f64 {
    r2.max(R2_CLIP_FLOOR)
}

/// Deterministic decode: argmax of the masked answer head.
pub fn predict_greedy(policy: &PolicyParams, task: &TaskInstance, features: &[f64]) -> Result<Answer> {
    let idx = policy.greedy_answer(features, task.options.len())?;
    let label = &task.options[idx];
    let parse_err = || Error::Config(format!("task {}: option `{label}` is not numeric", task.task_id));
    Ok(match task.kind {
        TaskKind::Indicator => Answer::Bin(label.parse().map_err(|_| parse_err())?),
        TaskKind::Counting => Answer::Count(label.parse().map_err(|_| parse_err())?),
        _ => Answer::Label(label.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub indicator: String,
    pub category: Category,
    pub n: usize,
    pub r2_raw: f64,
    pub r2_clipped: f64,
}

impl EvalRow {
    pub fn new(indicator: impl Into<String>, category: Category, n: usize, r2_raw: f64) -> Self {
        Self { indicator: indicator.into(), category, n, r2_raw, r2_clipped: clip_r2(r2_raw) }
    }
}

/// Exact-match accuracy for tasks without a bin target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxRow {
    pub kind: TaskKind,
    pub category: Option<Category>,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidRow {
    pub indicator: String,
    pub category: Category,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub category: Option<Category>,
    pub pred: String,
    pub gold: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    #[serde(default)]
    pub aux_rows: Vec<AuxRow>,
    #[serde(default)]
    pub invalid: Vec<InvalidRow>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<Prediction>>,
}

impl EvalReport {
    /// Unweighted mean of the rows' raw R²; `None` without rows.
    pub fn overall(&self) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        Some(self.rows.iter().map(|r| r.r2_raw).sum::<f64>() / self.rows.len() as f64)
    }

    pub fn overall_clipped(&self) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        Some(self.rows.iter().map(|r| r.r2_clipped).sum::<f64>() / self.rows.len() as f64)
    }
}

/// Scores `policy` on every category's tasks with greedy decoding.
pub fn evaluate(
    policy: &PolicyParams,
    task_sets: &BTreeMap<Category, Vec<TaskInstance>>,
    regions: &[Region],
    exec: Executor,
) -> Result<EvalReport> {
    let index = RegionIndex::new(regions);
    let mut report = EvalReport::default();
    let mut predictions = Vec::new();

    for (&category, tasks) in task_sets {
        if tasks.is_empty() {
            report.warnings.push(format!("category {category} has no tasks; omitted"));
            continue;
        }
        let decoded: Vec<Result<Answer>> = exec.map(tasks, |t| {
            let f = task_features(t, &index)?;
            predict_greedy(policy, t, &f)
        });

        let mut by_indicator: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut aux: BTreeMap<TaskKind, (usize, usize)> = BTreeMap::new();
        for (t, pred) in tasks.iter().zip(decoded) {
            let pred = pred?;
            predictions.push(Prediction {
                task_id: t.task_id.clone(),
                category: Some(category),
                pred: pred.canonical(),
                gold: t.gold.canonical(),
            });
            match (&t.gold, pred.numeric()) {
                (Answer::Bin(g), Some(p)) => {
                    let key = t.indicator.as_deref().unwrap_or("unknown");
                    let e = by_indicator.entry(key).or_default();
                    e.0.push(p);
                    e.1.push(*g as f64);
                }
                _ => {
                    let e = aux.entry(t.kind).or_default();
                    e.0 += 1;
                    e.1 += usize::from(pred == t.gold);
                }
            }
        }

        for (indicator, (preds, golds)) in by_indicator {
            match r_squared(&preds, &golds) {
                Ok(r2) => report.rows.push(EvalRow::new(indicator, category, preds.len(), r2)),
                Err(e) => {
                    report.warnings.push(format!("{indicator}/{category}: {e}"));
                    report.invalid.push(InvalidRow {
                        indicator: indicator.to_owned(),
                        category,
                        n: preds.len(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        for (kind, (n, correct)) in aux {
            report.aux_rows.push(AuxRow {
                kind,
                category: Some(category),
                n,
                accuracy: correct as f64 / n as f64,
            });
        }
    }
    report.predictions = Some(predictions);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str = "indicator,category,n,r2_raw,r2_clipped";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Renders the report. Column order is fixed; floats in CSV use shortest
/// round-trip formatting.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_field(&r.indicator),
                    r.category,
                    r.n,
                    r.r2_raw,
                    r.r2_clipped
                );
            }
        }
        ReportFormat::Markdown => {
            out.push_str("# Evaluation report\n");
            if let (Some(raw), Some(clipped)) = (report.overall(), report.overall_clipped()) {
                let _ = writeln!(
                    out,
                    "\nOverall (unweighted mean over rows): raw {raw:.4}, clipped {clipped:.4}"
                );
            }
            for cat in Category::ALL {
                let rows: Vec<&EvalRow> = report.rows.iter().filter(|r| r.category == cat).collect();
                if rows.is_empty() {
                    continue;
                }
                let _ = writeln!(out, "\n## {cat}\n");
                out.push_str("| indicator | category | n | R² raw | R² clipped |\n");
                out.push_str("|---|---|---:|---:|---:|\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {:.4} | {:.4} |",
                        r.indicator, r.category, r.n, r.r2_raw, r.r2_clipped
                    );
                }
            }
            if !report.aux_rows.is_empty() {
                out.push_str("\n## auxiliary accuracy\n\n| kind | category | n | accuracy |\n|---|---|---:|---:|\n");
                for a in &report.aux_rows {
                    let cat = a.category.map_or("-", Category::as_str);
                    let _ = writeln!(out, "| {} | {} | {} | {:.4} |", a.kind, cat, a.n, a.accuracy);
                }
            }
            if !report.invalid.is_empty() {
                out.push_str("\n## invalid rows\n\n");
                for i in &report.invalid {
                    let _ = writeln!(out, "- {} / {} (n = {}): {}", i.indicator, i.category, i.n, i.reason);
                }
            }
        }
    }
    out
}
