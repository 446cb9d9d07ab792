use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::objective::{generate_group, grpo_objective, ObjectiveOutput, RolloutGroup};
use super::optim::{update_params, AdamState};
use crate::dataset::{task_features, RegionIndex};
use crate::error::{Error, Result};
use crate::model::{Region, TaskInstance, N_BINS};
use crate::par::Executor;
use crate::policy::{PolicyGrad, PolicyParams};
use crate::reward::RewardConfig;
use crate::rng;

/// A task with its encoded policy input.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTask {
    pub task: TaskInstance,
    pub features: Vec<f64>,
}

pub fn prepare_tasks(tasks: &[TaskInstance], regions: &[Region]) -> Result<Vec<PreparedTask>> {
    let index = RegionIndex::new(regions);
    tasks
        .iter()
        .map(|t| {
            t.validate()?;
            Ok(PreparedTask { task: t.clone(), features: task_features(t, &index)? })
        })
        .collect()
}

/// Answer-head arity covering every task's options (at least the ten bins).
pub fn required_outputs(tasks: &[TaskInstance]) -> usize {
    tasks
        .iter()
        .map(|t| t.options.len())
        .max()
        .unwrap_or(0)
        .max(N_BINS as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: u64,
    pub epoch: u64,
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    pub clip_fraction: f64,
    pub mean_kl: f64,
    /// Negated batch objective.
    pub loss: f64,
    pub grad_norm: f64,
    pub per_kind_reward: BTreeMap<String, f64>,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub params: PolicyParams,
    pub ref_params: PolicyParams,
    pub optimizer: AdamState,
}

impl TrainState {
    /// Fresh state; the reference policy is frozen at `params`.
    pub fn new(params: PolicyParams) -> Self {
        let n = params.theta().len();
        Self {
            step: 0,
            ref_params: params.snapshot(),
            params,
            optimizer: AdamState::new(n),
        }
    }
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub reward: RewardConfig,
    pub exec: Executor,
}

struct GroupResult {
    group: RolloutGroup,
    out: ObjectiveOutput,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, reward: RewardConfig) -> Self {
        Self { cfg, reward, exec: Executor::default() }
    }

    pub fn with_executor(mut self, exec: Executor) -> Self {
        self.exec = exec;
        self
    }

    /// Applies the data ablation toggles.
    pub fn select<'a>(&self, tasks: &'a [PreparedTask]) -> Vec<&'a PreparedTask> {
        tasks
            .iter()
            .filter(|t| !(self.cfg.disable_perceptual_data && t.task.kind.is_perceptual()))
            .filter(|t| !(self.cfg.disable_general_data && t.task.kind.is_general()))
            .collect()
    }

    pub fn steps_per_epoch(&self, n_tasks: usize) -> u64 {
        n_tasks.div_ceil(self.cfg.batch_size) as u64
    }

    pub fn total_steps(&self, n_tasks: usize) -> u64 {
        let full = self.steps_per_epoch(n_tasks) * self.cfg.epochs as u64;
        if self.cfg.max_steps > 0 {
            full.min(self.cfg.max_steps)
        } else {
            full
        }
    }

    /// Trains `policy` on raw tasks from scratch. The configured grounding mode
    /// overrides the one carried by `policy`.
    pub fn train(
        &self,
        tasks: &[TaskInstance],
        regions: &[Region],
        policy: PolicyParams,
    ) -> Result<(PolicyParams, Vec<TrainMetrics>)> {
        let prepared = prepare_tasks(tasks, regions)?;
        let policy = policy.with_grounding(self.cfg.grounding);
        let (state, metrics) = self.run(&prepared, TrainState::new(policy), &mut |_, _| Ok(()))?;
        Ok((state.params, metrics))
    }

    /// Runs from `state.step` to the end of the schedule, calling `on_step`
    /// after every update.
    pub fn run(
        &self,
        tasks: &[PreparedTask],
        mut state: TrainState,
        on_step: &mut dyn FnMut(&TrainState, &TrainMetrics) -> Result<()>,
    ) -> Result<(TrainState, Vec<TrainMetrics>)> {
        self.cfg.validate()?;
        self.reward.validate()?;
        let selected = self.select(tasks);
        if selected.is_empty() {
            return Err(Error::Empty("training tasks"));
        }
        for t in &selected {
            if t.features.len() != state.params.dim() {
                return Err(Error::Dimension { expected: state.params.dim(), got: t.features.len() });
            }
            if t.task.options.len() > state.params.n_outputs() {
                return Err(Error::Dimension {
                    expected: state.params.n_outputs(),
                    got: t.task.options.len(),
                });
            }
        }

        let per_epoch = self.steps_per_epoch(selected.len());
        let total = self.total_steps(selected.len());
        let mut metrics = Vec::new();
        let mut order: Vec<usize> = Vec::new();
        let mut order_epoch = u64::MAX;

        while state.step < total {
            let epoch = state.step / per_epoch;
            if epoch != order_epoch {
                order = (0..selected.len()).collect();
                order.shuffle(&mut rng::stream(self.cfg.seed, &[rng::hash_str("shuffle"), epoch]));
                order_epoch = epoch;
            }
            let b = (state.step % per_epoch) as usize * self.cfg.batch_size;
            let batch: Vec<&PreparedTask> = order[b..(b + self.cfg.batch_size).min(order.len())]
                .iter()
                .map(|&i| selected[i])
                .collect();
            let m = self.step(&batch, &mut state, epoch)?;
            on_step(&state, &m)?;
            metrics.push(m);
        }
        Ok((state, metrics))
    }

    fn step(&self, batch: &[&PreparedTask], state: &mut TrainState, epoch: u64) -> Result<TrainMetrics> {
        let cfg = &self.cfg;
        let step = state.step;
        let sampler = state.params.clone();
        let ref_params = &state.ref_params;

        let results: Vec<Result<GroupResult>> = self.exec.map(batch, |t| {
            let mut r = rng::stream(cfg.seed, &[rng::hash_str("rollout"), step, rng::hash_str(&t.task.task_id)]);
            let group = generate_group(
                &sampler,
                ref_params,
                &t.task,
                &t.features,
                cfg.rollouts,
                &mut r,
                &self.reward,
                cfg.normalize_advantage_std,
            )?;
            let out = grpo_objective(&group, &sampler, cfg.epsilon, cfg.beta, &t.features)?;
            Ok(GroupResult { group, out })
        });
        let results: Vec<GroupResult> = results.into_iter().collect::<Result<_>>()?;

        let mut last = self.reduce(&results, step)?;
        let mut params = state.params.clone();
        let mut opt = state.optimizer.clone();
        for update in 0..cfg.updates_per_batch {
            if update > 0 {
                let pairs: Vec<(&GroupResult, &&PreparedTask)> = results.iter().zip(batch).collect();
                let outs: Vec<Result<ObjectiveOutput>> = self.exec.map(&pairs, |(r, t)| {
                    grpo_objective(&r.group, &params, cfg.epsilon, cfg.beta, &t.features)
                });
                let outs: Vec<ObjectiveOutput> = outs.into_iter().collect::<Result<_>>()?;
                let regrouped: Vec<GroupResult> = results
                    .iter()
                    .zip(outs)
                    .map(|(r, out)| GroupResult { group: r.group.clone(), out })
                    .collect();
                last = self.reduce(&regrouped, step)?;
            }
            let (next, next_opt) = update_params(&params, &last.grad, cfg, &opt);
            params = next;
            opt = next_opt;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                step,
                msg: "parameters became non-finite after the update".into(),
                dump: serde_json::to_string(&params).unwrap_or_default(),
            });
        }
        state.params = params;
        state.optimizer = opt;
        state.step += 1;

        let n_groups = results.len() as f64;
        let mut kind_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut reward_sum = 0.0;
        let mut adv_sum = 0.0;
        let mut samples = 0usize;
        for r in &results {
            let mean_r = r.group.rewards.iter().sum::<f64>() / r.group.rewards.len() as f64;
            let e = kind_sums.entry(r.group.task.kind.to_string()).or_default();
            e.0 += mean_r;
            e.1 += 1;
            reward_sum += r.group.rewards.iter().sum::<f64>();
            adv_sum += r.group.advantages.iter().map(|a| a.abs()).sum::<f64>();
            samples += r.group.rewards.len();
        }
        Ok(TrainMetrics {
            step: state.step,
            epoch,
            mean_reward: reward_sum / samples as f64,
            mean_abs_advantage: adv_sum / samples as f64,
            clip_fraction: last.clip_fraction,
            mean_kl: results.iter().map(|r| r.out.mean_kl).sum::<f64>() / n_groups,
            loss: -last.objective,
            grad_norm: last.grad.norm(),
            per_kind_reward: kind_sums
                .into_iter()
                .map(|(k, (s, c))| (k, s / c as f64))
                .collect(),
        })
    }

    /// Averages group objectives and gradients in batch order.
    fn reduce(&self, results: &[GroupResult], step: u64) -> Result<ObjectiveOutput> {
        let first = &results.first().ok_or(Error::Empty("batch"))?.out;
        let mut grad = PolicyGrad::zeros(first.grad.dim, first.grad.n_outputs);
        let mut objective = 0.0;
        let mut clip = 0.0;
        let mut kl = 0.0;
        let n = results.len() as f64;
        for r in results {
            if !r.out.objective.is_finite() || !r.out.grad.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    msg: format!("objective or gradient for task {}", r.group.task.task_id),
                    dump: serde_json::to_string_pretty(&r.group).unwrap_or_default(),
                });
            }
            grad.add_scaled(&r.out.grad, 1.0 / n);
            objective += r.out.objective / n;
            clip += r.out.clip_fraction / n;
            kl += r.out.mean_kl / n;
        }
        Ok(ObjectiveOutput { objective, grad, clip_fraction: clip, mean_kl: kl })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{bin_regions, gen_indicator_tasks, synth::linear_regions};

    fn small_setup() -> (Vec<TaskInstance>, Vec<Region>) {
        let (regions, _) = linear_regions(60, 8, "GDP", crate::dataset::synth::LEVEL_SPACING, 0.0, 3);
        let b = bin_regions(&regions, "GDP", 10).unwrap();
        let tasks = gen_indicator_tasks(&regions, &b, 60, 1).unwrap().tasks;
        (tasks, regions)
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (tasks, regions) = small_setup();
        let p = PolicyParams::init(8, 10, 0);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (q, m) = Trainer::new(cfg, RewardConfig::default()).train(&tasks, &regions, p.clone()).unwrap();
        assert_eq!(p, q);
        assert!(m.is_empty());
    }

    #[test]
    fn runs_are_deterministic_across_executors() {
        let (tasks, regions) = small_setup();
        let p = PolicyParams::init(8, 10, 0);
        let cfg = TrainConfig { epochs: 2, learning_rate: 0.01, ..TrainConfig::default() };
        let a = Trainer::new(cfg.clone(), RewardConfig::default())
            .with_executor(Executor::Sequential)
            .train(&tasks, &regions, p.clone())
            .unwrap();
        let b = Trainer::new(cfg, RewardConfig::default()).train(&tasks, &regions, p).unwrap();
        assert_eq!(a.0.theta(), b.0.theta());
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.len(), 16);
        for m in &a.1 {
            assert!(m.mean_kl >= 0.0);
            assert!((0.0..=1.0).contains(&m.clip_fraction));
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (tasks, regions) = small_setup();
        let prepared = prepare_tasks(&tasks, &regions).unwrap();
        let cfg = TrainConfig { epochs: 2, updates_per_batch: 2, ..TrainConfig::default() };
        let trainer = Trainer::new(cfg, RewardConfig::default());
        let start = TrainState::new(PolicyParams::init(8, 10, 0));
        let (full, full_metrics) = trainer.run(&prepared, start.clone(), &mut |_, _| Ok(())).unwrap();

        let mut saved = None;
        let _ = trainer.run(&prepared, start, &mut |s, _| {
            if s.step == 5 {
                saved = Some(s.clone());
                return Err(Error::Empty("interrupted"));
            }
            Ok(())
        });
        let (resumed, tail) = trainer.run(&prepared, saved.unwrap(), &mut |_, _| Ok(())).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(tail[0].step, 6);
        assert_eq!(&full_metrics[5..], &tail[..]);
    }

    #[test]
    fn data_ablation_filters_kinds() {
        use crate::dataset::{gen_counting_tasks, TaskGenConfig};
        let (mut tasks, regions) = small_setup();
        tasks.extend(gen_counting_tasks(&TaskGenConfig::default(), 8, 5, 0).unwrap().tasks);
        let prepared = prepare_tasks(&tasks, &regions).unwrap();
        let cfg = TrainConfig { disable_general_data: true, ..TrainConfig::default() };
        let t = Trainer::new(cfg, RewardConfig::default());
        assert_eq!(t.select(&prepared).len(), 60);
    }
}
