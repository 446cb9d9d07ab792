use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use urbanrl::dataset::synth::{linear_suite, LEVEL_SPACING};
use urbanrl::eval::evaluate;
use urbanrl::grpo::{prepare_tasks, TrainConfig, TrainState, Trainer};
use urbanrl::model::Category;
use urbanrl::par::Executor;
use urbanrl::policy::PolicyParams;
use urbanrl::reward::RewardConfig;

fn executors() -> Vec<(&'static str, Executor)> {
    let mut out = vec![("sequential", Executor::Sequential)];
    #[cfg(feature = "parallel")]
    out.push(("parallel", Executor::Parallel));
    out
}

fn train_steps(c: &mut Criterion) {
    let suite = linear_suite(512, 0, 16, LEVEL_SPACING, 0.5, 7).unwrap();
    let tasks = prepare_tasks(&suite.train, &suite.regions).unwrap();
    let mut group = c.benchmark_group("train_steps");
    group.sample_size(10);
    for batch_size in [8usize, 64] {
        let cfg = TrainConfig {
            batch_size,
            rollouts: 16,
            max_steps: 8,
            epochs: 1,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        for (name, exec) in executors() {
            let trainer = Trainer::new(cfg.clone(), RewardConfig::default()).with_executor(exec);
            group.bench_with_input(BenchmarkId::new(name, batch_size), &batch_size, |b, _| {
                b.iter(|| {
                    let state = TrainState::new(PolicyParams::init(16, 10, 0));
                    black_box(trainer.run(&tasks, state, &mut |_, _| Ok(())).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn greedy_eval(c: &mut Criterion) {
    let suite = linear_suite(0, 4000, 16, LEVEL_SPACING, 0.5, 7).unwrap();
    let sets: BTreeMap<Category, _> = [(Category::InDomain, suite.held_out)].into();
    let policy = PolicyParams::init(16, 10, 1);
    let mut group = c.benchmark_group("greedy_eval");
    for (name, exec) in executors() {
        group.bench_function(name, |b| {
            b.iter(|| black_box(evaluate(&policy, &sets, &suite.regions, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, train_steps, greedy_eval);
criterion_main!(benches);
