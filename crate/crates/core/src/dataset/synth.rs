//! Synthetic region tables for demos, tests and benchmarks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{bin_regions, indicator_tasks_for_all};
use crate::error::Result;
use crate::model::{Region, TaskInstance, N_BINS};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cities: Vec<String>,
    pub indicators: Vec<String>,
    pub regions_per_city: usize,
    pub dim: usize,
    pub seed: u64,
    /// Standard deviation of the per-city feature offset.
    pub city_spread: f64,
    /// Standard deviation of the noise added to each raw indicator value.
    pub indicator_noise: f64,
    /// Side length of the square each city's coordinates are drawn from.
    pub city_extent: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cities: super::TRAIN_CITIES
                .iter()
                .chain(&super::TEST_CITIES)
                .map(|s| s.to_string())
                .collect(),
            indicators: super::SEEN_INDICATORS
                .iter()
                .chain(&super::UNSEEN_INDICATORS)
                .map(|s| s.to_string())
                .collect(),
            regions_per_city: 40,
            dim: 16,
            seed: 0,
            city_spread: 1.0,
            indicator_noise: 0.3,
            city_extent: 10.0,
        }
    }
}

fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Regions whose features are a city offset plus unit Gaussian noise and whose
/// indicators are noisy linear read-outs of the features.
pub fn synthetic_regions(cfg: &SynthConfig) -> Vec<Region> {
    let mut rng = rng::stream(cfg.seed, &[rng::hash_str("synthetic_regions")]);
    let weights: Vec<Vec<f64>> = cfg
        .indicators
        .iter()
        .map(|_| unit(normal_vec(&mut rng, cfg.dim)))
        .collect();
    let mut out = Vec::with_capacity(cfg.cities.len() * cfg.regions_per_city);
    for (ci, city) in cfg.cities.iter().enumerate() {
        let offset: Vec<f64> = normal_vec(&mut rng, cfg.dim)
            .into_iter()
            .map(|x| x * cfg.city_spread)
            .collect();
        for i in 0..cfg.regions_per_city {
            let features: Vec<f64> = offset
                .iter()
                .map(|o| { let z: f64 = StandardNormal.sample(&mut rng); o + z })
                .collect();
            let indicators = cfg
                .indicators
                .iter()
                .zip(&weights)
                .map(|(name, w)| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (name.clone(), dot(w, &features) + cfg.indicator_noise * noise)
                })
                .collect();
            let coord = [
                rng.random::<f64>() * cfg.city_extent,
                rng.random::<f64>() * cfg.city_extent,
            ];
            out.push(Region {
                region_id: format!("c{ci:02}-r{i:04}"),
                city: city.clone(),
                features,
                indicators,
                coord: Some(coord),
            });
        }
    }
    out
}

/// Default gap between adjacent levels along the signal direction.
pub const LEVEL_SPACING: f64 = 1.0;

/// Single-city regions on ten balanced levels (`i % 10`). Each feature vector is
/// Gaussian noise orthogonal to a fixed unit vector `w` plus `level_offset · w`,
/// so `w·x` is `spacing · (level - 4.5)`. The indicator is that projection
/// plus `noise_sd` Gaussian noise. Returns the regions and `w`.
pub fn linear_regions(
    n: usize,
    dim: usize,
    indicator: &str,
    spacing: f64,
    noise_sd: f64,
    seed: u64,
) -> (Vec<Region>, Vec<f64>) {
    let mut rng = rng::stream(seed, &[rng::hash_str("linear_regions")]);
    let w = unit(normal_vec(&mut rng, dim));
    let regions = (0..n)
        .map(|i| {
            let level = (i % N_BINS as usize) as f64;
            let offset = (level - 4.5) * spacing;
            let z = normal_vec(&mut rng, dim);
            let along = dot(&w, &z);
            let features: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| zi + (offset - along) * wi).collect();
            let noise: f64 = StandardNormal.sample(&mut rng);
            Region {
                region_id: format!("lin-{i:05}"),
                city: "Beijing".into(),
                features,
                indicators: [(indicator.to_string(), offset + noise_sd * noise)].into_iter().collect(),
                coord: None,
            }
        })
        .collect();
    (regions, w)
}

/// Indicator tasks over [`linear_regions`], binned jointly and split by position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSuite {
    pub regions: Vec<Region>,
    pub direction: Vec<f64>,
    pub train: Vec<TaskInstance>,
    pub held_out: Vec<TaskInstance>,
}

pub fn linear_suite(
    n_train: usize,
    n_held_out: usize,
    dim: usize,
    spacing: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<LinearSuite> {
    let indicator = "GDP";
    let (regions, direction) = linear_regions(n_train + n_held_out, dim, indicator, spacing, noise_sd, seed);
    let binning = bin_regions(&regions, indicator, N_BINS)?;
    let mut train = indicator_tasks_for_all(&regions, &binning);
    let held_out = train.split_off(n_train);
    Ok(LinearSuite { regions, direction, train, held_out })
}
