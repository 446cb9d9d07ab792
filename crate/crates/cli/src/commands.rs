use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use urbanrl::dataset::synth::{synthetic_regions, SynthConfig};
use urbanrl::dataset::{bin_regions, generate_suite, load_regions, load_tasks, save_regions, save_tasks};
use urbanrl::dataset::{SplitConfig, TaskGenConfig};
use urbanrl::eval::{emit_report, evaluate, EvalReport, ReportFormat};
use urbanrl::grpo::{prepare_tasks, required_outputs, TrainMetrics, TrainState, Trainer};
use urbanrl::model::{parse_response, Category, TaskInstance, N_BINS};
use urbanrl::par::Executor;
use urbanrl::policy::{load_checkpoint, save_checkpoint, PolicyParams};
use urbanrl::reward::{total_reward, RewardBreakdown};

use crate::config::{load_toml, TrainFile};
use crate::manifest::RunManifest;
use crate::{Cli, Command, Global, TrainArgs};

pub const STATE_FILE: &str = "state.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint-final.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Synth { out, config } => synth(&g, &out, config.as_deref()),
        Command::Bin { regions, indicator, out } => bin(&regions, &indicator, &out),
        Command::Gen { regions, split, taskgen, out } => gen(&g, &regions, split.as_deref(), taskgen.as_deref(), &out),
        Command::Train(args) => train(&g, &args),
        Command::Eval { checkpoint, tasks, regions, out } => eval(&checkpoint, &tasks, &regions, &out),
        Command::Report { eval, format, out } => report(&eval, &format, out.as_deref()),
        Command::RewardCheck { tasks, responses, config, out } => {
            reward_check(&tasks, &responses, config.as_deref(), out.as_deref())
        }
    }
}

/// Manifest path for a single-file output.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    urbanrl::dataset::write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn synth(g: &Global, out: &Path, config: Option<&Path>) -> Result<()> {
    let mut cfg: SynthConfig = load_toml(config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let mut m = RunManifest::new("synth", Some(cfg.seed), &cfg)?;
    if let Some(c) = config {
        m = m.input(c)?;
    }
    m.output(out).write(&sidecar(out))?;
    ensure_parent(out)?;
    save_regions(out, &synthetic_regions(&cfg))?;
    Ok(())
}

fn bin(regions: &Path, indicator: &str, out: &Path) -> Result<()> {
    let loaded = load_regions(regions)?;
    let result = bin_regions(&loaded, indicator, N_BINS)
        .with_context(|| format!("binning indicator `{indicator}`"))?;
    RunManifest::new("bin", None, serde_json::json!({ "indicator": indicator, "n_bins": N_BINS }))?
        .input(regions)?
        .output(out)
        .write(&sidecar(out))?;
    write_json(out, &result)
}

fn gen(g: &Global, regions: &Path, split: Option<&Path>, taskgen: Option<&Path>, out: &Path) -> Result<()> {
    let split_cfg: SplitConfig = load_toml(split)?;
    split_cfg.validate()?;
    let mut cfg: TaskGenConfig = load_toml(taskgen)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scale {
        cfg.scale = s;
    }
    let loaded = load_regions(regions)?;
    let suite = generate_suite(&loaded, &split_cfg, &cfg)?;

    let files: Vec<(PathBuf, &Vec<TaskInstance>)> = suite
        .train
        .iter()
        .map(|(k, v)| (out.join("train").join(format!("{k}.jsonl")), v))
        .chain(suite.eval.iter().map(|(c, v)| (out.join("eval").join(format!("{c}.jsonl")), v)))
        .collect();
    let mut m = RunManifest::new("gen", Some(cfg.seed), serde_json::json!({ "split": split_cfg, "taskgen": cfg }))?
        .input(regions)?;
    for p in [split, taskgen].into_iter().flatten() {
        m = m.input(p)?;
    }
    for (p, _) in &files {
        m = m.output(p);
    }
    m.output(&out.join("notes.txt")).write(&out.join(MANIFEST_FILE))?;

    for (p, tasks) in &files {
        ensure_parent(p)?;
        save_tasks(p, tasks)?;
    }
    let mut notes = suite.notes.join("\n");
    if !notes.is_empty() {
        notes.push('\n');
    }
    fs::write(out.join("notes.txt"), notes)?;
    Ok(())
}

fn jsonl_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Training tasks from a `.jsonl` file, a directory with a `train/` subdirectory,
/// or a directory of `.jsonl` files.
fn load_train_tasks(path: &Path) -> Result<Vec<TaskInstance>> {
    if path.is_file() {
        return Ok(load_tasks(path)?);
    }
    let dir = if path.join("train").is_dir() { path.join("train") } else { path.to_path_buf() };
    let mut out = Vec::new();
    for f in jsonl_files(&dir)? {
        out.extend(load_tasks(&f)?);
    }
    if out.is_empty() {
        bail!("no training tasks under {}", dir.display());
    }
    Ok(out)
}

/// Evaluation tasks keyed by category, read from `<dir>/eval/<category>.jsonl`
/// (or `<dir>/<category>.jsonl`).
fn load_eval_tasks(path: &Path) -> Result<BTreeMap<Category, Vec<TaskInstance>>> {
    let dir = if path.join("eval").is_dir() { path.join("eval") } else { path.to_path_buf() };
    let mut sets = BTreeMap::new();
    for cat in Category::ALL {
        let f = dir.join(format!("{cat}.jsonl"));
        if f.is_file() {
            sets.insert(cat, load_tasks(&f)?);
        }
    }
    if sets.is_empty() {
        bail!("no evaluation task files under {}", dir.display());
    }
    Ok(sets)
}

fn train_file(g: &Global, args: &TrainArgs) -> Result<TrainFile> {
    let mut f: TrainFile = load_toml(args.config.as_deref())?;
    if let Some(s) = g.seed {
        f.seed = s;
    }
    f.disable_keyword_reward |= args.disable_keyword_reward;
    f.disable_regression_reward |= args.disable_regression_reward;
    f.disable_perceptual_data |= args.disable_perceptual_data;
    f.disable_general_data |= args.disable_general_data;
    Ok(f)
}

/// Drops metric lines past `step` so a resumed run continues the log cleanly.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut kept = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: TrainMetrics = serde_json::from_str(&line).with_context(|| format!("parsing {}", path.display()))?;
        if m.step <= step {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

fn train(g: &Global, args: &TrainArgs) -> Result<()> {
    let file = train_file(g, args)?;
    let cfg = file.train_config();
    let tasks = load_train_tasks(&args.tasks)?;
    let regions = load_regions(&args.regions)?;
    let prepared = prepare_tasks(&tasks, &regions)?;
    let dim = prepared.first().map(|t| t.features.len()).context("no training tasks")?;
    let out = &args.out;
    let state_path = out.join(STATE_FILE);
    let metrics_path = out.join(METRICS_FILE);

    let state = if args.resume {
        let s: TrainState = serde_json::from_reader(BufReader::new(
            File::open(&state_path).with_context(|| format!("opening {}", state_path.display()))?,
        ))
        .with_context(|| format!("parsing {}", state_path.display()))?;
        if s.params.dim() != dim {
            bail!("saved state has feature dim {} but tasks have {dim}", s.params.dim());
        }
        s
    } else {
        let init = PolicyParams::init(dim, required_outputs(&tasks), cfg.seed).with_grounding(cfg.grounding);
        TrainState::new(init)
    };

    let mut m = RunManifest::new("train", Some(cfg.seed), serde_json::json!({ "train": file, "resume_step": state.step }))?
        .input(&args.tasks)?
        .input(&args.regions)?;
    if let Some(c) = &args.config {
        m = m.input(c)?;
    }
    if args.resume {
        m = m.input(&state_path)?;
    }
    m.output(&state_path)
        .output(&metrics_path)
        .output(&out.join(FINAL_CHECKPOINT))
        .write(&out.join(MANIFEST_FILE))?;

    if args.resume {
        truncate_metrics(&metrics_path, state.step)?;
    }
    let mut metrics_out = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .write(true)
            .append(args.resume)
            .truncate(!args.resume)
            .open(&metrics_path)?,
    );

    let trainer = Trainer::new(cfg, file.reward_config());
    let every = file.checkpoint_every;
    let mut io_error: Option<anyhow::Error> = None;
    let mut on_step = |s: &TrainState, metric: &TrainMetrics| -> urbanrl::Result<()> {
        let res = (|| -> Result<()> {
            serde_json::to_writer(&mut metrics_out, metric)?;
            metrics_out.write_all(b"\n")?;
            if every > 0 && s.step.is_multiple_of(every) {
                metrics_out.flush()?;
                save_checkpoint(out.join(format!("checkpoint-{:06}.json", s.step)), &s.params)?;
                write_json(&state_path, s)?;
            }
            Ok(())
        })();
        res.map_err(|e| {
            let msg = format!("{e:#}");
            io_error = Some(e);
            urbanrl::Error::Config(msg)
        })
    };
    let result = trainer.run(&prepared, state, &mut on_step);
    if let Some(e) = io_error {
        return Err(e);
    }
    let (final_state, _) = result?;
    metrics_out.flush()?;
    save_checkpoint(out.join(FINAL_CHECKPOINT), &final_state.params)?;
    write_json(&state_path, &final_state)
}

fn eval(checkpoint: &Path, tasks: &Path, regions: &Path, out: &Path) -> Result<()> {
    let policy = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let sets = load_eval_tasks(tasks)?;
    let loaded = load_regions(regions)?;
    let names = ["eval.json", "report.csv", "report.md", "predictions.jsonl"];
    let mut m = RunManifest::new("eval", None, serde_json::json!({ "categories": sets.keys().collect::<Vec<_>>() }))?
        .input(checkpoint)?
        .input(tasks)?
        .input(regions)?;
    for n in names {
        m = m.output(&out.join(n));
    }
    m.write(&out.join(MANIFEST_FILE))?;

    let mut report = evaluate(&policy, &sets, &loaded, Executor::default())?;
    let predictions = report.predictions.take().unwrap_or_default();
    write_json(&out.join("eval.json"), &report)?;
    fs::write(out.join("report.csv"), emit_report(&report, ReportFormat::Csv))?;
    fs::write(out.join("report.md"), emit_report(&report, ReportFormat::Markdown))?;
    write_lines(&out.join("predictions.jsonl"), &predictions)
}

fn report(eval_path: &Path, format: &str, out: Option<&Path>) -> Result<()> {
    let fmt: ReportFormat = format.parse()?;
    let report: EvalReport = serde_json::from_reader(BufReader::new(
        File::open(eval_path).with_context(|| format!("opening {}", eval_path.display()))?,
    ))
    .with_context(|| format!("parsing {}", eval_path.display()))?;
    let text = emit_report(&report, fmt);
    match out {
        Some(p) => {
            RunManifest::new("report", None, serde_json::json!({ "format": format }))?
                .input(eval_path)?
                .output(p)
                .write(&sidecar(p))?;
            ensure_parent(p)?;
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ResponseLine {
    task_id: String,
    raw: String,
}

#[derive(Debug, Serialize)]
struct CheckedResponse<'a> {
    task_id: &'a str,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

fn reward_check(tasks: &Path, responses: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let file: TrainFile = load_toml(config)?;
    let reward = file.reward_config();
    reward.validate()?;
    let all = if tasks.is_dir() {
        let mut v = Vec::new();
        for sub in [tasks.join("train"), tasks.join("eval"), tasks.to_path_buf()] {
            if sub.is_dir() {
                for f in jsonl_files(&sub)? {
                    v.extend(load_tasks(&f)?);
                }
            }
        }
        v
    } else {
        load_tasks(tasks)?
    };
    let by_id: BTreeMap<&str, &TaskInstance> = all.iter().map(|t| (t.task_id.as_str(), t)).collect();

    let mut lines = Vec::new();
    for (i, line) in BufReader::new(File::open(responses).with_context(|| format!("opening {}", responses.display()))?)
        .lines()
        .enumerate()
    {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ResponseLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: malformed response record", responses.display(), i + 1))?;
        lines.push(r);
    }

    let mut checked = Vec::with_capacity(lines.len());
    for r in &lines {
        let task = by_id
            .get(r.task_id.as_str())
            .with_context(|| format!("response refers to unknown task `{}`", r.task_id))?;
        let breakdown = total_reward(task, &parse_response(&r.raw), &reward)?;
        checked.push(CheckedResponse { task_id: &r.task_id, breakdown });
    }

    match out {
        Some(p) => {
            let mut m = RunManifest::new("reward-check", None, &file)?.input(tasks)?.input(responses)?;
            if let Some(c) = config {
                m = m.input(c)?;
            }
            m.output(p).write(&sidecar(p))?;
            write_lines(p, &checked)
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            urbanrl::dataset::write_jsonl(&mut w, &checked)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("a/bins.json")), PathBuf::from("a/bins.json.manifest.json"));
    }

    #[test]
    fn truncation_keeps_saved_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(METRICS_FILE);
        let line = |step| {
            serde_json::to_string(&TrainMetrics {
                step,
                epoch: 0,
                mean_reward: 0.5,
                mean_abs_advantage: 0.1,
                clip_fraction: 0.0,
                mean_kl: 0.0,
                loss: 0.0,
                grad_norm: 1.0,
                per_kind_reward: BTreeMap::new(),
            })
            .unwrap()
        };
        fs::write(&p, (1..=5).map(|s| line(s) + "\n").collect::<String>()).unwrap();
        truncate_metrics(&p, 3).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 3);
    }
}
