use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Region, TaskInstance, TaskKind};

/// Region lookup by id.
pub struct RegionIndex<'a> {
    by_id: HashMap<&'a str, &'a Region>,
    dim: usize,
}

impl<'a> RegionIndex<'a> {
    pub fn new(regions: &'a [Region]) -> Self {
        Self {
            by_id: regions.iter().map(|r| (r.region_id.as_str(), r)).collect(),
            dim: regions.first().map_or(0, |r| r.features.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: &str) -> Result<&'a Region> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownRegion(id.to_owned()))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Policy input for a task.
///
/// Single-region tasks use the region's features; ranking pairs use the
/// difference `second - first`; triplets place each member's mean squared
/// distance to the other two (divided by the dimension) in coordinates 0..3.
/// Synthetic scenes carry their own vector.
pub fn task_features(task: &TaskInstance, index: &RegionIndex<'_>) -> Result<Vec<f64>> {
    if let Some(f) = &task.features {
        return Ok(f.clone());
    }
    let regions: Vec<&Region> = task
        .region_refs
        .iter()
        .map(|id| index.get(id))
        .collect::<Result<_>>()?;
    let need = match task.kind {
        TaskKind::Ranking => 2,
        TaskKind::SpatialTriplet => 3,
        _ => 1,
    };
    if regions.len() != need {
        return Err(Error::Config(format!(
            "task {} references {} regions, expected {need}",
            task.task_id,
            regions.len()
        )));
    }
    Ok(match task.kind {
        TaskKind::Ranking => regions[1]
            .features
            .iter()
            .zip(&regions[0].features)
            .map(|(b, a)| b - a)
            .collect(),
        TaskKind::SpatialTriplet => {
            let dim = regions[0].features.len();
            if dim < 3 {
                return Err(Error::Dimension { expected: 3, got: dim });
            }
            let mut out = vec![0.0; dim];
            for k in 0..3 {
                let total: f64 = (0..3)
                    .filter(|&j| j != k)
                    .map(|j| sq_dist(&regions[k].features, &regions[j].features))
                    .sum();
                out[k] = total / (2.0 * dim as f64);
            }
            out
        }
        _ => regions[0].features.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Answer, RewardSpec};

    fn region(id: &str, f: Vec<f64>) -> Region {
        Region {
            region_id: id.into(),
            city: "Paris".into(),
            features: f,
            indicators: Default::default(),
            coord: None,
        }
    }

    #[test]
    fn encodings() {
        let regions = vec![
            region("a", vec![0.0, 0.0, 0.0]),
            region("b", vec![1.0, 0.0, 0.0]),
            region("c", vec![10.0, 0.0, 0.0]),
        ];
        let idx = RegionIndex::new(&regions);
        let mut t = TaskInstance {
            task_id: "t".into(),
            kind: TaskKind::Ranking,
            region_refs: vec!["a".into(), "b".into()],
            question: String::new(),
            gold: Answer::Label("2".into()),
            reward_spec: RewardSpec::StandardStandard,
            category: None,
            indicator: None,
            options: vec!["1".into(), "2".into()],
            features: None,
        };
        assert_eq!(task_features(&t, &idx).unwrap(), vec![1.0, 0.0, 0.0]);
        t.kind = TaskKind::SpatialTriplet;
        t.region_refs = vec!["a".into(), "b".into(), "c".into()];
        let f = task_features(&t, &idx).unwrap();
        // odd one out has the largest mean distance
        assert!(f[2] > f[0] && f[2] > f[1]);
        t.region_refs[0] = "zzz".into();
        assert!(matches!(task_features(&t, &idx), Err(Error::UnknownRegion(_))));
    }
}
