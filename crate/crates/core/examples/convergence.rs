//! Trains on a linear synthetic suite and prints held-out metrics.
//!
//! Usage: `cargo run --release --example convergence -- [lr] [beta] [steps] [noise] [seed] [variant] [batch] [rollouts] [wd] [normalize] [updates]`
//! where variant is one of `full`, `no-keyword`, `no-regression`, `no-both`.

use std::collections::BTreeMap;

use urbanrl::dataset::synth::linear_suite;
use urbanrl::eval::{evaluate, predict_greedy};
use urbanrl::grpo::{TrainConfig, Trainer};
use urbanrl::model::Category;
use urbanrl::par::Executor;
use urbanrl::policy::PolicyParams;
use urbanrl::reward::RewardConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn env(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> urbanrl::Result<()> {
    let lr: f64 = arg(1, 0.02);
    let beta: f64 = arg(2, 0.01);
    let steps: u64 = arg(3, 2000);
    let noise: f64 = arg(4, 0.0);
    let seed: u64 = arg(5, 0);
    let variant: String = arg(6, "full".to_string());
    let batch: usize = arg(7, 8);
    let rollouts: usize = arg(8, 5);
    let wd: f64 = arg(9, 0.01);
    let normalize: bool = arg(10, false);
    let updates: usize = arg(11, 1);

    let suite = linear_suite(1000, 200, 16, env("SPACING", urbanrl::dataset::synth::LEVEL_SPACING), noise, seed)?;
    let cfg = TrainConfig {
        learning_rate: lr,
        beta,
        seed,
        batch_size: batch,
        rollouts,
        weight_decay: wd,
        normalize_advantage_std: normalize,
        updates_per_batch: updates,
        adam_eps: env("ADAM_EPS", 1e-8),
        grounding: env("GROUNDING", 1.0) != 0.0,
        epochs: 1000,
        max_steps: steps,
        ..TrainConfig::default()
    };
    let reward = RewardConfig {
        disable_keyword_reward: matches!(variant.as_str(), "no-keyword" | "no-both"),
        disable_regression_reward: matches!(variant.as_str(), "no-regression" | "no-both"),
        regression: urbanrl::reward::RegressionRewardSpec { delta: env("DELTA", 1.0), alpha: env("ALPHA", 1.0) },
        ..RewardConfig::default()
    };
    let start = std::time::Instant::now();
    let trainer = Trainer::new(cfg, reward).with_executor(Executor::default());
    let (policy, metrics) = trainer.train(&suite.train, &suite.regions, PolicyParams::init(16, 10, seed))?;

    let index = urbanrl::dataset::RegionIndex::new(&suite.regions);
    let acc = |tasks: &[urbanrl::model::TaskInstance]| -> urbanrl::Result<f64> {
        let mut hit = 0usize;
        for t in tasks {
            let f = urbanrl::dataset::task_features(t, &index)?;
            hit += usize::from(predict_greedy(&policy, t, &f)? == t.gold);
        }
        Ok(hit as f64 / tasks.len() as f64)
    };
    if std::env::var("CONFUSION").is_ok() {
        let mut conf = [[0usize; 10]; 10];
        for t in &suite.train {
            let f = urbanrl::dataset::task_features(t, &index)?;
            let p = predict_greedy(&policy, t, &f)?.numeric().unwrap() as usize;
            let g = t.gold.numeric().unwrap() as usize;
            conf[g - 1][p - 1] += 1;
        }
        for row in conf {
            println!("{row:?}");
        }
        println!("b={:?}", policy.b());
        let w = &suite.direction;
        for k in 0..10 {
            let row = policy.w_row(k);
            let a: f64 = row.iter().zip(w).map(|(x, y)| x * y).sum();
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            print!("({a:.2},{n:.2}) ");
        }
        println!();
    }
    let sets: BTreeMap<Category, Vec<_>> = [(Category::InDomain, suite.held_out.clone())].into();
    let report = evaluate(&policy, &sets, &suite.regions, Executor::default())?;
    let last = metrics.last().map(|m| m.mean_reward).unwrap_or(f64::NAN);
    println!(
        "variant={variant} spacing={} alpha={} delta={} adam_eps={} lr={lr} beta={beta} steps={steps} batch={batch} rollouts={rollouts} wd={wd} norm={normalize} updates={updates} noise={noise} seed={seed} \
         train_acc={:.3} held_acc={:.3} held_r2={:.4} mentions={:?} last_reward={last:.3} secs={:.1}",
        env("SPACING", urbanrl::dataset::synth::LEVEL_SPACING), env("ALPHA", 1.0), env("DELTA", 1.0), env("ADAM_EPS", 1e-8),
        acc(&suite.train)?,
        acc(&suite.held_out)?,
        report.rows[0].r2_raw,
        policy.mention_probs().map(|p| (p * 1000.0).round() / 1000.0),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
