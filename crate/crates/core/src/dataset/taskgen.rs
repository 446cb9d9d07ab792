use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::binning::{bin_regions, BinningResult};
use super::split::{apply_split, SplitConfig};
use crate::error::{Error, Result};
use crate::model::{Answer, Category, Region, TaskInstance, TaskKind, N_BINS};
use crate::rng;

/// Training instance counts per data type at full scale.
pub const REFERENCE_INSTANCE_COUNTS: KindCounts = KindCounts {
    indicator: 2828,
    spatial_triplet: 632,
    geolocation: 350,
    ranking: 699,
    counting: 300,
    pattern: 300,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindCounts {
    pub indicator: usize,
    pub spatial_triplet: usize,
    pub geolocation: usize,
    pub ranking: usize,
    pub counting: usize,
    pub pattern: usize,
}

impl Default for KindCounts {
    fn default() -> Self {
        REFERENCE_INSTANCE_COUNTS
    }
}

impl KindCounts {
    pub fn get(&self, kind: TaskKind) -> usize {
        match kind {
            TaskKind::Indicator => self.indicator,
            TaskKind::SpatialTriplet => self.spatial_triplet,
            TaskKind::Geolocation => self.geolocation,
            TaskKind::Ranking => self.ranking,
            TaskKind::Counting => self.counting,
            TaskKind::Pattern => self.pattern,
        }
    }

    pub fn scaled(&self, kind: TaskKind, scale: f64) -> usize {
        (self.get(kind) as f64 * scale).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskGenConfig {
    pub counts: KindCounts,
    /// Multiplier applied to `counts`.
    pub scale: f64,
    pub seed: u64,
    /// Side length of the square grid cells that define a neighborhood.
    pub neighborhood_cell: f64,
    pub count_min: u64,
    pub count_max: u64,
    /// Standard deviation of the noise coordinates in counting scenes.
    pub count_noise: f64,
    /// Fraction of training-city regions held out for in-domain evaluation.
    pub in_domain_holdout: f64,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        Self {
            counts: KindCounts::default(),
            scale: 0.1,
            seed: 0,
            neighborhood_cell: 2.5,
            count_min: 1,
            count_max: 10,
            count_noise: 0.5,
            in_domain_holdout: 0.2,
        }
    }
}

impl TaskGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale must be >= 0, got {}", self.scale)));
        }
        if self.count_min > self.count_max {
            return Err(Error::Config("count_min exceeds count_max".into()));
        }
        if self.neighborhood_cell.is_nan() || self.neighborhood_cell <= 0.0 {
            return Err(Error::Config("neighborhood_cell must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.in_domain_holdout) {
            return Err(Error::Config("in_domain_holdout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    CrossCity,
    CrossNeighborhood,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneratedTasks {
    pub tasks: Vec<TaskInstance>,
    pub notes: Vec<String>,
}

impl GeneratedTasks {
    fn renumber(&mut self, prefix: &str) {
        for (i, t) in self.tasks.iter_mut().enumerate() {
            t.task_id = format!("{prefix}-{:05}", i + 1);
        }
    }
}

fn bin_options() -> Vec<String> {
    (1..=N_BINS).map(|b| b.to_string()).collect()
}

fn position_options(n: usize) -> Vec<String> {
    (1..=n).map(|p| p.to_string()).collect()
}

fn indicator_task(region: &Region, binning: &BinningResult, idx: usize) -> Option<TaskInstance> {
    let bin = binning.label(&region.region_id)?;
    Some(TaskInstance {
        task_id: format!("indicator-{:05}", idx + 1),
        kind: TaskKind::Indicator,
        region_refs: vec![region.region_id.clone()],
        question: format!(
            "Based on the imagery of this region, rate its {} on a scale from 1 to {N_BINS}.",
            binning.indicator
        ),
        gold: Answer::Bin(bin),
        reward_spec: TaskKind::Indicator.reward_spec(),
        category: None,
        indicator: Some(binning.indicator.clone()),
        options: bin_options(),
        features: None,
    })
}

/// One indicator task per labelled region, in input order.
pub fn indicator_tasks_for_all(regions: &[Region], binning: &BinningResult) -> Vec<TaskInstance> {
    regions
        .iter()
        .filter_map(|r| indicator_task(r, binning, 0))
        .enumerate()
        .map(|(i, mut t)| {
            t.task_id = format!("indicator-{:05}", i + 1);
            t
        })
        .collect()
}

/// Draws `n` indices from `0..len`: without replacement when possible, otherwise
/// with replacement and a note.
fn draw_indices(
    rng: &mut impl Rng,
    len: usize,
    n: usize,
    what: &str,
    notes: &mut Vec<String>,
) -> Vec<usize> {
    if n <= len {
        index::sample(rng, len, n).into_vec()
    } else {
        notes.push(format!(
            "requested {n} {what} tasks from {len} candidates; sampling with replacement"
        ));
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

/// One indicator-prediction task per sampled region; gold is the region's bin.
pub fn gen_indicator_tasks(
    regions: &[Region],
    binning: &BinningResult,
    n: usize,
    seed: u64,
) -> Result<GeneratedTasks> {
    let mut out = GeneratedTasks::default();
    if n == 0 {
        return Ok(out);
    }
    let pool: Vec<&Region> = regions
        .iter()
        .filter(|r| binning.labels.contains_key(&r.region_id))
        .collect();
    if pool.is_empty() {
        return Err(Error::Insufficient(format!(
            "no region carries a `{}` label",
            binning.indicator
        )));
    }
    let mut rng = rng::stream(seed, &[rng::hash_str("indicator")]);
    let picks = draw_indices(&mut rng, pool.len(), n, "indicator", &mut out.notes);
    out.tasks = picks
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| indicator_task(pool[p], binning, i))
        .collect();
    Ok(out)
}

/// Grid cell of a coordinate.
pub fn neighborhood(coord: [f64; 2], cell: f64) -> (i64, i64) {
    ((coord[0] / cell).floor() as i64, (coord[1] / cell).floor() as i64)
}

fn triplet_task(
    same: [&Region; 2],
    odd: &Region,
    pos: usize,
    idx: usize,
    mode: TripletMode,
) -> TaskInstance {
    let mut refs: Vec<String> = same.iter().map(|r| r.region_id.clone()).collect();
    refs.insert(pos, odd.region_id.clone());
    let scope = match mode {
        TripletMode::CrossCity => "city",
        TripletMode::CrossNeighborhood => "neighborhood",
    };
    TaskInstance {
        task_id: format!("spatial_triplet-{:05}", idx + 1),
        kind: TaskKind::SpatialTriplet,
        region_refs: refs,
        question: format!(
            "Three street views are shown. Two share a {scope}; which one (1, 2 or 3) is spatially furthest from the other two?"
        ),
        gold: Answer::Label((pos + 1).to_string()),
        reward_spec: TaskKind::SpatialTriplet.reward_spec(),
        category: None,
        indicator: None,
        options: position_options(3),
        features: None,
    }
}

/// Odd-one-out triplets: two regions share a group (city or neighborhood cell)
/// and the third comes from a different group.
pub fn gen_spatial_triplets(
    regions: &[Region],
    n: usize,
    seed: u64,
    mode: TripletMode,
    cell: f64,
) -> Result<GeneratedTasks> {
    let mut out = GeneratedTasks::default();
    if n == 0 {
        return Ok(out);
    }
    if regions.len() < 3 {
        return Err(Error::Insufficient(format!(
            "spatial triplets need at least 3 regions, got {}",
            regions.len()
        )));
    }

    // outer key: city; inner key: group within which the pair is drawn
    let mut groups: BTreeMap<String, BTreeMap<(i64, i64), Vec<&Region>>> = BTreeMap::new();
    for r in regions {
        let key = match mode {
            TripletMode::CrossCity => (0, 0),
            TripletMode::CrossNeighborhood => {
                let c = r.coord.ok_or_else(|| {
                    Error::Insufficient(format!(
                        "region `{}` has no coord; neighborhood triplets need coordinates",
                        r.region_id
                    ))
                })?;
                neighborhood(c, cell)
            }
        };
        groups.entry(r.city.clone()).or_default().entry(key).or_default().push(r);
    }

    // (pair group, pool of candidates for the odd region)
    let mut setups: Vec<(&Vec<&Region>, Vec<&Region>)> = Vec::new();
    for (city, cells) in &groups {
        for (key, members) in cells {
            if members.len() < 2 {
                continue;
            }
            let others: Vec<&Region> = match mode {
                TripletMode::CrossCity => groups
                    .iter()
                    .filter(|(c, _)| *c != city)
                    .flat_map(|(_, cs)| cs.values().flatten().copied())
                    .collect(),
                TripletMode::CrossNeighborhood => cells
                    .iter()
                    .filter(|(k, _)| *k != key)
                    .flat_map(|(_, m)| m.iter().copied())
                    .collect(),
            };
            if !others.is_empty() {
                setups.push((members, others));
            }
        }
    }
    if setups.is_empty() {
        return Err(Error::Insufficient(format!(
            "no group with two regions and a distinct partner group for {mode:?} triplets"
        )));
    }

    let mut rng = rng::stream(seed, &[rng::hash_str("spatial_triplet"), mode as u64]);
    for idx in 0..n {
        let (members, others) = setups.choose(&mut rng).expect("non-empty");
        let pair = index::sample(&mut rng, members.len(), 2);
        let odd = others.choose(&mut rng).expect("non-empty");
        let pos = rng.random_range(0..3);
        out.tasks.push(triplet_task(
            [members[pair.index(0)], members[pair.index(1)]],
            odd,
            pos,
            idx,
            mode,
        ));
    }
    Ok(out)
}

/// City-of-origin tasks, stratified so each city gets `floor(n/k)` or `ceil(n/k)` tasks.
pub fn gen_geolocation_tasks(regions: &[Region], n: usize, seed: u64) -> Result<GeneratedTasks> {
    let mut out = GeneratedTasks::default();
    if n == 0 {
        return Ok(out);
    }
    let mut by_city: BTreeMap<&str, Vec<&Region>> = BTreeMap::new();
    for r in regions {
        by_city.entry(r.city.as_str()).or_default().push(r);
    }
    if by_city.is_empty() {
        return Err(Error::Insufficient("geolocation needs at least one region".into()));
    }
    let cities: Vec<&str> = by_city.keys().copied().collect();
    let options: Vec<String> = cities.iter().map(|c| c.to_string()).collect();
    let k = cities.len();

    let mut rng = rng::stream(seed, &[rng::hash_str("geolocation")]);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut quota = vec![n / k; k];
    for &c in order.iter().take(n % k) {
        quota[c] += 1;
    }

    let mut picked: Vec<&Region> = Vec::with_capacity(n);
    for (ci, city) in cities.iter().enumerate() {
        let pool = &by_city[city];
        let what = format!("geolocation ({city})");
        for p in draw_indices(&mut rng, pool.len(), quota[ci], &what, &mut out.notes) {
            picked.push(pool[p]);
        }
    }
    picked.shuffle(&mut rng);

    out.tasks = picked
        .into_iter()
        .enumerate()
        .map(|(i, r)| TaskInstance {
            task_id: format!("geolocation-{:05}", i + 1),
            kind: TaskKind::Geolocation,
            region_refs: vec![r.region_id.clone()],
            question: "Which city was this street view captured in?".into(),
            gold: Answer::Label(r.city.clone()),
            reward_spec: TaskKind::Geolocation.reward_spec(),
            category: None,
            indicator: None,
            options: options.clone(),
            features: None,
        })
        .collect();
    Ok(out)
}

/// Pairwise comparisons on binned labels; pairs with equal labels are skipped.
pub fn gen_ranking_pairs(
    regions: &[Region],
    binning: &BinningResult,
    n: usize,
    seed: u64,
) -> Result<GeneratedTasks> {
    let mut out = GeneratedTasks::default();
    if n == 0 {
        return Ok(out);
    }
    let pool: Vec<(&Region, u32)> = regions
        .iter()
        .filter_map(|r| binning.label(&r.region_id).map(|l| (r, l)))
        .collect();
    let distinct: BTreeSet<u32> = pool.iter().map(|(_, l)| *l).collect();
    if distinct.len() < 2 {
        return Err(Error::Insufficient(format!(
            "no pair of regions with unequal `{}` labels",
            binning.indicator
        )));
    }
    let mut rng = rng::stream(seed, &[rng::hash_str("ranking")]);
    let mut skipped = 0usize;
    while out.tasks.len() < n {
        let pair = index::sample(&mut rng, pool.len(), 2);
        let (a, la) = pool[pair.index(0)];
        let (b, lb) = pool[pair.index(1)];
        if la == lb {
            skipped += 1;
            continue;
        }
        let idx = out.tasks.len();
        out.tasks.push(TaskInstance {
            task_id: format!("ranking-{:05}", idx + 1),
            kind: TaskKind::Ranking,
            region_refs: vec![a.region_id.clone(), b.region_id.clone()],
            question: format!(
                "Which region (1 or 2) has the higher {}?",
                binning.indicator
            ),
            gold: Answer::Label(if la > lb { "1" } else { "2" }.into()),
            reward_spec: TaskKind::Ranking.reward_spec(),
            category: None,
            indicator: Some(binning.indicator.clone()),
            options: position_options(2),
            features: None,
        });
    }
    if skipped > 0 {
        out.notes.push(format!("ranking: skipped {skipped} tied pairs"));
    }
    Ok(out)
}

const COUNT_OBJECTS: [&str; 5] = ["cars", "trees", "pedestrians", "benches", "street lamps"];

/// Synthetic counting scenes: coordinate 0 carries the object count, the rest is noise.
pub fn gen_counting_tasks(
    cfg: &TaskGenConfig,
    dim: usize,
    n: usize,
    seed: u64,
) -> Result<GeneratedTasks> {
    cfg.validate()?;
    if dim == 0 && n > 0 {
        return Err(Error::Config("counting scenes need a feature dimension >= 1".into()));
    }
    let noise = Normal::new(0.0, cfg.count_noise.max(0.0))
        .map_err(|e| Error::Config(format!("count_noise: {e}")))?;
    let options: Vec<String> = (cfg.count_min..=cfg.count_max).map(|c| c.to_string()).collect();
    let mut rng = rng::stream(seed, &[rng::hash_str("counting")]);
    let tasks = (0..n)
        .map(|i| {
            let count = rng.random_range(cfg.count_min..=cfg.count_max);
            let object = COUNT_OBJECTS[rng.random_range(0..COUNT_OBJECTS.len())];
            let mut features = vec![0.0; dim];
            features[0] = count as f64;
            for f in features.iter_mut().skip(1) {
                *f = noise.sample(&mut rng);
            }
            TaskInstance {
                task_id: format!("counting-{:05}", i + 1),
                kind: TaskKind::Counting,
                region_refs: Vec::new(),
                question: format!("How many {object} are in this scene?"),
                gold: Answer::Count(count),
                reward_spec: TaskKind::Counting.reward_spec(),
                category: None,
                indicator: None,
                options: options.clone(),
                features: Some(features),
            }
        })
        .collect();
    Ok(GeneratedTasks { tasks, notes: Vec::new() })
}

/// Next term of an arithmetic or geometric integer progression.
pub fn next_term(seq: &[i64]) -> Option<i64> {
    let [.., a, b, c] = seq else { return None };
    if b - a == c - b {
        return Some(c + (c - b));
    }
    if *a != 0 && *b != 0 && b % a == 0 && c % b == 0 && b / a == c / b {
        return Some(c * (c / b));
    }
    None
}

fn pattern_distractors(answer: i64, step: i64, rng: &mut impl Rng) -> Vec<i64> {
    let step = step.abs().max(1);
    let mut pool: Vec<i64> = [
        answer - step,
        answer + step,
        answer + 2 * step,
        answer - 1,
        answer + 1,
        answer + 2,
        answer - 2,
    ]
    .into_iter()
    .filter(|&v| v > 0 && v != answer)
    .collect::<BTreeSet<_>>()
    .into_iter()
    .collect();
    pool.shuffle(rng);
    pool.truncate(3);
    pool
}

/// Synthetic sequence-completion items with four options. The first three terms
/// and the options, divided by the largest of them, fill the first seven
/// feature coordinates.
pub fn gen_pattern_tasks(
    cfg: &TaskGenConfig,
    dim: usize,
    n: usize,
    seed: u64,
) -> Result<GeneratedTasks> {
    cfg.validate()?;
    if dim < 7 && n > 0 {
        return Err(Error::Config(format!(
            "pattern items need a feature dimension >= 7, got {dim}"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::hash_str("pattern")]);
    let mut tasks = Vec::with_capacity(n);
    for i in 0..n {
        let seq: Vec<i64> = if rng.random_bool(0.5) {
            let a0 = rng.random_range(1..=9);
            let d = rng.random_range(1..=5);
            (0..3).map(|k| a0 + k * d).collect()
        } else {
            let a0 = rng.random_range(1..=3);
            let r: i64 = rng.random_range(2..=3);
            (0..3).map(|k| a0 * r.pow(k as u32)).collect()
        };
        let answer = next_term(&seq).expect("generated progression");
        let mut opts = pattern_distractors(answer, seq[2] - seq[1], &mut rng);
        opts.push(answer);
        opts.shuffle(&mut rng);

        let scale = seq.iter().chain(&opts).copied().max().unwrap_or(1).max(1) as f64;
        let mut features = vec![0.0; dim];
        for (f, v) in features.iter_mut().zip(seq.iter().chain(&opts)) {
            *f = *v as f64 / scale;
        }
        tasks.push(TaskInstance {
            task_id: format!("pattern-{:05}", i + 1),
            kind: TaskKind::Pattern,
            region_refs: Vec::new(),
            question: format!(
                "Complete the sequence {}, {}, {}, _",
                seq[0], seq[1], seq[2]
            ),
            gold: Answer::Label(answer.to_string()),
            reward_spec: TaskKind::Pattern.reward_spec(),
            category: None,
            indicator: None,
            options: opts.iter().map(|v| v.to_string()).collect(),
            features: Some(features),
        });
    }
    Ok(GeneratedTasks { tasks, notes: Vec::new() })
}

/// Training tasks per kind and evaluation tasks per category.
#[derive(Debug, Clone, Default)]
pub struct TaskSuite {
    pub train: BTreeMap<TaskKind, Vec<TaskInstance>>,
    pub eval: BTreeMap<Category, Vec<TaskInstance>>,
    pub notes: Vec<String>,
}

fn split_evenly(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Full generation pipeline: city split, in-domain holdout, global binning per
/// indicator, all six training data types, and the three evaluation categories.
pub fn generate_suite(
    regions: &[Region],
    split: &SplitConfig,
    cfg: &TaskGenConfig,
) -> Result<TaskSuite> {
    cfg.validate()?;
    let (train_regions, test_regions) = apply_split(regions, split)?;
    let dim = regions.first().map_or(0, |r| r.features.len());
    let seed = cfg.seed;
    let sub = |tag: &str, k: u64| rng::derive_seed(seed, &[rng::hash_str(tag), k]);
    let mut suite = TaskSuite::default();

    // in-domain holdout
    let mut ids: Vec<usize> = (0..train_regions.len()).collect();
    ids.shuffle(&mut rng::stream(seed, &[rng::hash_str("holdout")]));
    let n_hold = (train_regions.len() as f64 * cfg.in_domain_holdout).round() as usize;
    let (hold_ids, pool_ids) = ids.split_at(n_hold);
    let mut hold_ids = hold_ids.to_vec();
    hold_ids.sort_unstable();
    let mut pool_ids = pool_ids.to_vec();
    pool_ids.sort_unstable();
    let holdout: Vec<Region> = hold_ids.iter().map(|&i| train_regions[i].clone()).collect();
    let pool: Vec<Region> = pool_ids.iter().map(|&i| train_regions[i].clone()).collect();

    let mut binnings: BTreeMap<&str, BinningResult> = BTreeMap::new();
    for name in split.train_indicators.iter().chain(&split.test_only_indicators) {
        match bin_regions(regions, name, N_BINS) {
            Ok(b) => {
                suite.notes.extend(b.warnings.iter().cloned());
                binnings.insert(name.as_str(), b);
            }
            Err(Error::MissingIndicator(..)) => {
                suite.notes.push(format!("indicator `{name}` absent from regions; skipped"))
            }
            Err(e) => return Err(e),
        }
    }
    let train_bins: Vec<&BinningResult> = split
        .train_indicators
        .iter()
        .filter_map(|n| binnings.get(n.as_str()))
        .collect();

    let mut add = |kind: TaskKind, g: GeneratedTasks| {
        suite.notes.extend(g.notes);
        suite.train.entry(kind).or_default().extend(g.tasks);
    };

    let n_ind = cfg.counts.scaled(TaskKind::Indicator, cfg.scale);
    if n_ind > 0 && train_bins.is_empty() {
        return Err(Error::Insufficient("no training indicator present in regions".into()));
    }
    for (i, (b, n)) in train_bins.iter().zip(split_evenly(n_ind, train_bins.len())).enumerate() {
        add(TaskKind::Indicator, gen_indicator_tasks(&pool, b, n, sub("indicator", i as u64))?);
    }

    let n_sp = cfg.counts.scaled(TaskKind::SpatialTriplet, cfg.scale);
    let n_city = n_sp.div_ceil(2);
    add(
        TaskKind::SpatialTriplet,
        gen_spatial_triplets(&pool, n_city, sub("spatial", 0), TripletMode::CrossCity, cfg.neighborhood_cell)?,
    );
    add(
        TaskKind::SpatialTriplet,
        gen_spatial_triplets(
            &pool,
            n_sp - n_city,
            sub("spatial", 1),
            TripletMode::CrossNeighborhood,
            cfg.neighborhood_cell,
        )?,
    );

    add(
        TaskKind::Geolocation,
        gen_geolocation_tasks(&pool, cfg.counts.scaled(TaskKind::Geolocation, cfg.scale), sub("geolocation", 0))?,
    );

    let n_rank = cfg.counts.scaled(TaskKind::Ranking, cfg.scale);
    for (i, (b, n)) in train_bins.iter().zip(split_evenly(n_rank, train_bins.len())).enumerate() {
        add(TaskKind::Ranking, gen_ranking_pairs(&pool, b, n, sub("ranking", i as u64))?);
    }

    add(
        TaskKind::Counting,
        gen_counting_tasks(cfg, dim, cfg.counts.scaled(TaskKind::Counting, cfg.scale), sub("counting", 0))?,
    );
    add(
        TaskKind::Pattern,
        gen_pattern_tasks(cfg, dim, cfg.counts.scaled(TaskKind::Pattern, cfg.scale), sub("pattern", 0))?,
    );

    for (kind, tasks) in suite.train.iter_mut() {
        let mut g = GeneratedTasks { tasks: std::mem::take(tasks), notes: Vec::new() };
        g.renumber(&format!("train-{kind}"));
        *tasks = g.tasks;
    }

    // evaluation: every eligible (region, indicator) pair
    let eval_regions: Vec<&Region> = holdout.iter().chain(&test_regions).collect();
    for (name, b) in &binnings {
        for r in &eval_regions {
            if !b.labels.contains_key(&r.region_id) {
                continue;
            }
            let cat = split.categorize(&r.city, name)?;
            let mut t = indicator_task(r, b, 0).expect("label checked");
            t.category = Some(cat);
            suite.eval.entry(cat).or_default().push(t);
        }
    }
    for (cat, tasks) in suite.eval.iter_mut() {
        let mut g = GeneratedTasks { tasks: std::mem::take(tasks), notes: Vec::new() };
        g.renumber(&format!("eval-{cat}"));
        *tasks = g.tasks;
    }
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::binning::bin_indicator;
    use crate::dataset::synth::{synthetic_regions, SynthConfig};

    fn region(id: &str, city: &str, coord: [f64; 2], gdp: f64) -> Region {
        Region {
            region_id: id.into(),
            city: city.into(),
            features: vec![0.0; 8],
            indicators: [("GDP".to_string(), gdp)].into_iter().collect(),
            coord: Some(coord),
        }
    }

    fn gdp_binning(regions: &[Region]) -> BinningResult {
        bin_regions(regions, "GDP", 10).unwrap()
    }

    #[test]
    fn indicator_tasks_pass_through_bins() {
        let regions: Vec<Region> = (0..10)
            .map(|i| region(&format!("r{i}"), "Beijing", [0.0, 0.0], i as f64))
            .collect();
        let b = gdp_binning(&regions);
        let g = gen_indicator_tasks(&regions, &b, 10, 3).unwrap();
        for t in &g.tasks {
            assert_eq!(t.gold, Answer::Bin(b.label(&t.region_refs[0]).unwrap()));
            assert_eq!(t.reward_spec, crate::model::RewardSpec::KeywordRegression);
            t.validate().unwrap();
        }
        let r7 = g.tasks.iter().find(|t| t.region_refs[0] == "r6").unwrap();
        assert_eq!(r7.gold, Answer::Bin(7));
        assert!(gen_indicator_tasks(&regions, &b, 0, 3).unwrap().tasks.is_empty());
        assert_eq!(g, gen_indicator_tasks(&regions, &b, 10, 3).unwrap());
        let over = gen_indicator_tasks(&regions, &b, 25, 3).unwrap();
        assert_eq!(over.tasks.len(), 25);
        assert_eq!(over.notes.len(), 1);
    }

    #[test]
    fn cross_city_triplet_gold_is_odd_city() {
        let regions = vec![
            region("b1", "Beijing", [0.0, 0.0], 1.0),
            region("b2", "Beijing", [1.0, 0.0], 2.0),
            region("t1", "Tokyo", [0.0, 0.0], 3.0),
        ];
        let g = gen_spatial_triplets(&regions, 20, 1, TripletMode::CrossCity, 2.5).unwrap();
        for t in &g.tasks {
            let pos: usize = t.gold.canonical().parse().unwrap();
            assert_eq!(t.region_refs[pos - 1], "t1");
            t.validate().unwrap();
        }
    }

    #[test]
    fn neighborhood_triplet_gold_is_other_cell() {
        let regions = vec![
            region("a1", "Paris", [0.1, 0.1], 1.0),
            region("a2", "Paris", [1.0, 2.0], 2.0),
            region("b1", "Paris", [7.0, 7.0], 3.0),
        ];
        let g = gen_spatial_triplets(&regions, 20, 1, TripletMode::CrossNeighborhood, 2.5).unwrap();
        for t in &g.tasks {
            let pos: usize = t.gold.canonical().parse().unwrap();
            assert_eq!(t.region_refs[pos - 1], "b1");
        }
    }

    #[test]
    fn triplets_need_three_regions() {
        let regions = vec![region("a", "Paris", [0.0, 0.0], 1.0), region("b", "Rome", [0.0, 0.0], 2.0)];
        assert!(gen_spatial_triplets(&regions, 1, 0, TripletMode::CrossCity, 1.0).is_err());
    }

    #[test]
    fn geolocation_is_stratified() {
        let regions = synthetic_regions(&SynthConfig { regions_per_city: 6, ..SynthConfig::default() });
        let regions: Vec<Region> = regions.into_iter().filter(|r| r.city.len() <= 6).collect();
        let cities: BTreeSet<&str> = regions.iter().map(|r| r.city.as_str()).collect();
        let k = cities.len();
        let n = 47;
        let g = gen_geolocation_tasks(&regions, n, 9).unwrap();
        assert_eq!(g.tasks.len(), n);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in &g.tasks {
            let city = &regions.iter().find(|r| r.region_id == t.region_refs[0]).unwrap().city;
            assert_eq!(t.gold, Answer::Label(city.clone()));
            *counts.entry(t.gold.canonical()).or_default() += 1;
        }
        assert_eq!(counts.len(), k);
        for c in counts.values() {
            assert!(*c == n / k || *c == n.div_ceil(k), "{counts:?}");
        }
        assert_eq!(g, gen_geolocation_tasks(&regions, n, 9).unwrap());
    }

    #[test]
    fn ranking_pairs_have_unequal_labels() {
        let regions: Vec<Region> = (0..30)
            .map(|i| region(&format!("r{i}"), "Paris", [0.0, 0.0], (i % 4) as f64))
            .collect();
        let b = gdp_binning(&regions);
        let g = gen_ranking_pairs(&regions, &b, 200, 5).unwrap();
        assert_eq!(g.tasks.len(), 200);
        for t in &g.tasks {
            let la = b.label(&t.region_refs[0]).unwrap();
            let lb = b.label(&t.region_refs[1]).unwrap();
            assert_ne!(la, lb);
            let expect = if la > lb { "1" } else { "2" };
            assert_eq!(t.gold.canonical(), expect);
        }
    }

    #[test]
    fn ranking_without_unequal_pair_errors() {
        let regions: Vec<Region> = (0..5)
            .map(|i| region(&format!("r{i}"), "Paris", [0.0, 0.0], 1.0))
            .collect();
        let b = gdp_binning(&regions);
        assert!(gen_ranking_pairs(&regions, &b, 3, 0).is_err());
    }

    #[test]
    fn ranking_gold_second_when_higher() {
        let b = bin_indicator("GDP", &[("a".into(), 1.0), ("b".into(), 2.0)], 10).unwrap();
        let regions = vec![region("a", "P", [0.0; 2], 1.0), region("b", "P", [0.0; 2], 2.0)];
        let g = gen_ranking_pairs(&regions, &b, 10, 0).unwrap();
        for t in g.tasks {
            let second_higher = t.region_refs[1] == "b";
            assert_eq!(t.gold.canonical(), if second_higher { "2" } else { "1" });
        }
    }

    #[test]
    fn counting_uniform_over_range() {
        let cfg = TaskGenConfig::default();
        let g = gen_counting_tasks(&cfg, 16, 1000, 11).unwrap();
        let mut hist = [0usize; 11];
        for t in &g.tasks {
            let Answer::Count(c) = t.gold else { panic!() };
            assert_eq!(t.features.as_ref().unwrap()[0], c as f64);
            hist[c as usize] += 1;
            t.validate().unwrap();
        }
        assert_eq!(hist[0], 0);
        // expected 100 per value; 5 sigma band for binomial(1000, 0.1)
        for &h in &hist[1..] {
            assert!((53..=147).contains(&h), "{hist:?}");
        }
        assert_eq!(g, gen_counting_tasks(&cfg, 16, 1000, 11).unwrap());
    }

    #[test]
    fn pattern_rules_and_distractors() {
        assert_eq!(next_term(&[2, 4, 6]), Some(8));
        assert_eq!(next_term(&[3, 6, 12]), Some(24));
        assert_eq!(next_term(&[1, 5, 2]), None);
        let opts = ["7", "8", "9", "10"];
        assert!(opts.contains(&next_term(&[2, 4, 6]).unwrap().to_string().as_str()));

        let g = gen_pattern_tasks(&TaskGenConfig::default(), 16, 500, 2).unwrap();
        for t in &g.tasks {
            t.validate().unwrap();
            assert_eq!(t.options.len(), 4);
            let gold = t.gold.canonical();
            assert_eq!(t.options.iter().filter(|o| **o == gold).count(), 1);
            let uniq: BTreeSet<_> = t.options.iter().collect();
            assert_eq!(uniq.len(), 4);
        }
        assert_eq!(g, gen_pattern_tasks(&TaskGenConfig::default(), 16, 500, 2).unwrap());
    }

    #[test]
    fn suite_counts_and_categories() {
        let regions = synthetic_regions(&SynthConfig::default());
        let split = SplitConfig::default();
        let suite = generate_suite(&regions, &split, &TaskGenConfig::default()).unwrap();
        assert_eq!(suite.train[&TaskKind::Indicator].len(), 283);
        assert_eq!(suite.train[&TaskKind::SpatialTriplet].len(), 63);
        for (kind, tasks) in &suite.train {
            for t in tasks {
                assert_eq!(t.kind, *kind);
                assert_eq!(t.reward_spec, kind.reward_spec());
            }
        }
        for (cat, tasks) in &suite.eval {
            for t in tasks {
                let r = regions.iter().find(|r| r.region_id == t.region_refs[0]).unwrap();
                let ind = t.indicator.as_deref().unwrap();
                assert_eq!(split.categorize(&r.city, ind).unwrap(), *cat);
            }
        }
        assert_eq!(suite.eval.len(), 3);
        // in-domain evaluation regions never appear in training indicator tasks
        let train_ids: BTreeSet<&str> = suite.train[&TaskKind::Indicator]
            .iter()
            .map(|t| t.region_refs[0].as_str())
            .collect();
        for t in &suite.eval[&Category::InDomain] {
            assert!(!train_ids.contains(t.region_refs[0].as_str()));
        }
    }
}
