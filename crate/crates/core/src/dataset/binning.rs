use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningResult {
    pub indicator: String,
    pub labels: BTreeMap<String, u32>,
    /// `bin_edges[k-1]` is the largest value carrying a label `<= k`; a value
    /// `v` falls in bin `1 + #{edges < v}`.
    pub bin_edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BinningResult {
    pub fn label(&self, region_id: &str) -> Option<u32> {
        self.labels.get(region_id).copied()
    }

    /// Bin for an arbitrary value under the stored edges.
    pub fn label_for_value(&self, v: f64) -> u32 {
        1 + self.bin_edges.iter().filter(|&&e| e < v).count() as u32
    }
}

/// Equal-frequency binning. Regions are ranked by `(value, region_id)`; rank `r`
/// of `n` maps to bin `floor(r * n_bins / n) + 1`, and tied values all take the
/// bin of their first member.
pub fn bin_indicator(
    indicator: &str,
    values: &[(String, f64)],
    n_bins: u32,
) -> Result<BinningResult> {
    if values.is_empty() {
        return Err(Error::EmptyIndicator);
    }
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be positive".into()));
    }
    if let Some((id, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite value {v} for region {id}")));
    }

    let mut sorted: Vec<&(String, f64)> = values.iter().collect();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));

    let n = sorted.len() as u64;
    let mut labels = BTreeMap::new();
    let mut ordered_labels = Vec::with_capacity(sorted.len());
    let mut prev: Option<(f64, u32)> = None;
    for (rank, (id, v)) in sorted.iter().enumerate() {
        let label = match prev {
            Some((pv, pl)) if pv == *v => pl,
            _ => (rank as u64 * n_bins as u64 / n) as u32 + 1,
        };
        prev = Some((*v, label));
        if labels.insert(id.clone(), label).is_some() {
            return Err(Error::Config(format!("duplicate region_id `{id}` in indicator column")));
        }
        ordered_labels.push((*v, label));
    }

    let bin_edges = (1..n_bins)
        .map(|k| {
            ordered_labels
                .iter()
                .filter(|(_, l)| *l <= k)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut warnings = Vec::new();
    if sorted.first().map(|x| x.1) == sorted.last().map(|x| x.1) {
        warnings.push(format!(
            "indicator `{indicator}` is constant across {n} regions; all labels set to 1"
        ));
    }

    Ok(BinningResult {
        indicator: indicator.to_owned(),
        labels,
        bin_edges,
        warnings,
    })
}

/// Bins `indicator` over every region that reports it.
pub fn bin_regions(regions: &[Region], indicator: &str, n_bins: u32) -> Result<BinningResult> {
    let values: Vec<(String, f64)> = regions
        .iter()
        .filter_map(|r| r.indicators.get(indicator).map(|v| (r.region_id.clone(), *v)))
        .collect();
    if values.is_empty() {
        return Err(Error::MissingIndicator(
            indicator.to_owned(),
            regions.first().map_or_else(String::new, |r| r.region_id.clone()),
        ));
    }
    bin_indicator(indicator, &values, n_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(vals: &[f64]) -> Vec<(String, f64)> {
        vals.iter().enumerate().map(|(i, v)| (format!("r{i:03}"), *v)).collect()
    }

    #[test]
    fn ten_values_one_per_bin() {
        let vals: Vec<f64> = (1..=10).map(|i| i as f64 * 10.0).collect();
        let b = bin_indicator("x", &col(&vals), 10).unwrap();
        for i in 0..10 {
            // oracle: ceil(rank * 10 / n) with 1-based rank
            let rank = i as u32 + 1;
            assert_eq!(b.label(&format!("r{i:03}")), Some((rank * 10).div_ceil(10)));
        }
        assert!(b.warnings.is_empty());
        assert_eq!(b.bin_edges.len(), 9);
    }

    #[test]
    fn constant_column_warns() {
        let b = bin_indicator("x", &col(&[5.0; 7]), 10).unwrap();
        assert!(b.labels.values().all(|&l| l == 1));
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn empty_column_errors() {
        let err = bin_indicator("x", &[], 10).unwrap_err();
        assert_eq!(err.to_string(), "empty indicator column");
    }

    #[test]
    fn twenty_values_two_per_bin() {
        let vals: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64 + 0.5).collect();
        let b = bin_indicator("x", &col(&vals), 10).unwrap();
        let mut counts = [0; 11];
        for l in b.labels.values() {
            counts[*l as usize] += 1;
        }
        assert_eq!(&counts[1..], &[2; 10]);
    }

    #[test]
    fn ties_share_first_bin() {
        let b = bin_indicator("x", &col(&[1.0, 2.0, 2.0, 2.0, 3.0]), 5).unwrap();
        assert_eq!(b.label("r001"), Some(2));
        assert_eq!(b.label("r002"), Some(2));
        assert_eq!(b.label("r003"), Some(2));
        assert_eq!(b.label("r004"), Some(5));
    }

    proptest! {
        #[test]
        fn binning_invariants(vals in prop::collection::vec(-1e3f64..1e3, 1..60), scale in 0.01f64..100.0, rot in 0usize..60) {
            let data = col(&vals);
            let b = bin_indicator("x", &data, 10).unwrap();
            // edges respected and labels in range
            for (id, v) in &data {
                let l = b.label(id).unwrap();
                prop_assert!((1..=10).contains(&l));
                prop_assert_eq!(b.label_for_value(*v), l);
            }
            // monotone
            for (ia, va) in &data {
                for (ib, vb) in &data {
                    if va < vb { prop_assert!(b.label(ia) <= b.label(ib)); }
                }
            }
            // permutation invariant
            let mut shuffled = data.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(&bin_indicator("x", &shuffled, 10).unwrap().labels, &b.labels);
            // positive scaling invariant
            let scaled: Vec<_> = data.iter().map(|(i, v)| (i.clone(), v * scale)).collect();
            prop_assert_eq!(&bin_indicator("x", &scaled, 10).unwrap().labels, &b.labels);
        }

        #[test]
        fn balanced_when_distinct(k in 1usize..8) {
            let n = 10 * k;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * 1.618).sin()).collect();
            let b = bin_indicator("x", &col(&vals), 10).unwrap();
            let mut counts = [0usize; 11];
            for l in b.labels.values() { counts[*l as usize] += 1; }
            prop_assert!(counts[1..].iter().all(|&c| c == k));
        }
    }
}
