use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

/// Data preparation, GRPO training, reward auditing and evaluation for
/// urban indicator prediction.
#[derive(Debug, Parser)]
#[command(name = "urbanrl", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Override every seed in the loaded configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override the task-count multiplier used by `gen`.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic regions file.
    Synth {
        #[arg(long, env = "URBANRL_OUT")]
        out: PathBuf,
        /// TOML with synthetic-region settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Bin one indicator into ten equal-frequency levels.
    Bin {
        #[arg(long, env = "URBANRL_REGIONS")]
        regions: PathBuf,
        #[arg(long)]
        indicator: String,
        #[arg(long, env = "URBANRL_OUT")]
        out: PathBuf,
    },
    /// Generate training and evaluation task files.
    Gen {
        #[arg(long, env = "URBANRL_REGIONS")]
        regions: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        taskgen: Option<PathBuf>,
        #[arg(long, env = "URBANRL_OUT")]
        out: PathBuf,
    },
    /// Train a policy with GRPO.
    Train(TrainArgs),
    /// Score a checkpoint on the evaluation tasks.
    Eval {
        #[arg(long, env = "URBANRL_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long, env = "URBANRL_TASKS")]
        tasks: PathBuf,
        #[arg(long, env = "URBANRL_REGIONS")]
        regions: PathBuf,
        #[arg(long, env = "URBANRL_OUT")]
        out: PathBuf,
    },
    /// Render a saved evaluation as CSV or markdown.
    Report {
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hand-written responses against their tasks.
    RewardCheck {
        #[arg(long, env = "URBANRL_TASKS")]
        tasks: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        /// Training TOML whose reward settings are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "URBANRL_TASKS")]
    pub tasks: PathBuf,
    #[arg(long, env = "URBANRL_REGIONS")]
    pub regions: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "URBANRL_OUT")]
    pub out: PathBuf,
    /// Continue from `<out>/state.json`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long = "disable_keyword_reward", alias = "disable-keyword-reward")]
    pub disable_keyword_reward: bool,
    #[arg(long = "disable_regression_reward", alias = "disable-regression-reward")]
    pub disable_regression_reward: bool,
    #[arg(long = "disable_perceptual_data", alias = "disable-perceptual-data")]
    pub disable_perceptual_data: bool,
    #[arg(long = "disable_general_data", alias = "disable-general-data")]
    pub disable_general_data: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.global.jobs;
    match urbanrl::par::with_jobs(jobs, || commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
