use std::collections::BTreeMap;

use urbanrl::dataset::synth::{synthetic_regions, SynthConfig};
use urbanrl::dataset::{generate_suite, load_tasks, save_tasks, SplitConfig, TaskGenConfig};
use urbanrl::eval::{emit_report, evaluate, ReportFormat, CSV_HEADER};
use urbanrl::grpo::{prepare_tasks, required_outputs, TrainConfig, TrainState, Trainer};
use urbanrl::model::{Category, TaskInstance, TaskKind};
use urbanrl::par::Executor;
use urbanrl::policy::{load_checkpoint, save_checkpoint, PolicyParams};
use urbanrl::reward::RewardConfig;

fn small_suite(seed: u64) -> (Vec<urbanrl::model::Region>, urbanrl::dataset::TaskSuite) {
    let regions = synthetic_regions(&SynthConfig { regions_per_city: 12, seed, ..Default::default() });
    let cfg = TaskGenConfig { scale: 0.02, seed, ..Default::default() };
    let suite = generate_suite(&regions, &SplitConfig::default(), &cfg).unwrap();
    (regions, suite)
}

fn all_train(suite: &urbanrl::dataset::TaskSuite) -> Vec<TaskInstance> {
    suite.train.values().flatten().cloned().collect()
}

#[test]
fn generate_train_evaluate_report() {
    let (regions, suite) = small_suite(3);
    assert_eq!(suite.train.len(), TaskKind::ALL.len());
    for cat in Category::ALL {
        assert!(!suite.eval[&cat].is_empty(), "{cat} is empty");
    }
    let tasks = all_train(&suite);
    let cfg = TrainConfig { max_steps: 25, learning_rate: 0.01, ..TrainConfig::default() };
    let policy = PolicyParams::init(16, required_outputs(&tasks), 3);
    let (trained, metrics) = Trainer::new(cfg, RewardConfig::default()).train(&tasks, &regions, policy.clone()).unwrap();
    assert_eq!(metrics.len(), 25);
    assert!(metrics.iter().all(|m| m.mean_kl >= 0.0 && (0.0..=1.0).contains(&m.clip_fraction)));
    assert_ne!(trained.theta(), policy.theta());

    let report = evaluate(&trained, &suite.eval, &regions, Executor::default()).unwrap();
    assert!(!report.rows.is_empty());
    let csv = emit_report(&report, ReportFormat::Csv);
    assert!(csv.starts_with(CSV_HEADER));
    let md = emit_report(&report, ReportFormat::Markdown);
    for cat in Category::ALL {
        assert!(md.contains(cat.as_str()));
    }
}

#[test]
fn executors_give_identical_runs() {
    let (regions, suite) = small_suite(5);
    let tasks = all_train(&suite);
    let prepared = prepare_tasks(&tasks, &regions).unwrap();
    let cfg = TrainConfig { max_steps: 12, learning_rate: 0.01, ..TrainConfig::default() };
    let n = required_outputs(&tasks);
    let run = |exec| {
        Trainer::new(cfg.clone(), RewardConfig::default())
            .with_executor(exec)
            .run(&prepared, TrainState::new(PolicyParams::init(16, n, 5)), &mut |_, _| Ok(()))
            .unwrap()
    };
    let (a, ma) = run(Executor::Sequential);
    let (b, mb) = run(Executor::default());
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    let ea = evaluate(&a.params, &suite.eval, &regions, Executor::Sequential).unwrap();
    let eb = evaluate(&b.params, &suite.eval, &regions, Executor::default()).unwrap();
    assert_eq!(emit_report(&ea, ReportFormat::Csv), emit_report(&eb, ReportFormat::Csv));
}

#[test]
fn files_round_trip_through_disk() {
    let (regions, suite) = small_suite(8);
    let dir = tempfile::tempdir().unwrap();
    let tasks = &suite.eval[&Category::UnseenCity];
    let path = dir.path().join("tasks.jsonl");
    save_tasks(&path, tasks).unwrap();
    assert_eq!(&load_tasks(&path).unwrap(), tasks);

    let policy = PolicyParams::init(16, required_outputs(&all_train(&suite)), 8);
    let ckpt = dir.path().join("policy.json");
    save_checkpoint(&ckpt, &policy).unwrap();
    let back = load_checkpoint(&ckpt).unwrap();
    assert_eq!(back, policy);
    let sets: BTreeMap<_, _> = [(Category::UnseenCity, tasks.clone())].into();
    let r1 = evaluate(&policy, &sets, &regions, Executor::Sequential).unwrap();
    let r2 = evaluate(&back, &sets, &regions, Executor::Sequential).unwrap();
    assert_eq!(emit_report(&r1, ReportFormat::Csv), emit_report(&r2, ReportFormat::Csv));
}

#[test]
fn ablating_all_data_is_an_error() {
    let (regions, suite) = small_suite(2);
    let tasks: Vec<TaskInstance> = suite.train[&TaskKind::Counting].clone();
    let cfg = TrainConfig { disable_general_data: true, max_steps: 3, ..TrainConfig::default() };
    let policy = PolicyParams::init(16, required_outputs(&tasks), 2);
    assert!(Trainer::new(cfg, RewardConfig::default()).train(&tasks, &regions, policy).is_err());
}
