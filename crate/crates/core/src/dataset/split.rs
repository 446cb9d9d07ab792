use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Category, Region};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_cities: BTreeSet<String>,
    pub test_cities: BTreeSet<String>,
    pub train_indicators: BTreeSet<String>,
    pub test_only_indicators: BTreeSet<String>,
}

impl Default for SplitConfig {
    /// Ten training cities, seven held-out cities, five seen and six unseen indicators.
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            train_cities: set(&super::TRAIN_CITIES),
            test_cities: set(&super::TEST_CITIES),
            train_indicators: set(&super::SEEN_INDICATORS),
            test_only_indicators: set(&super::UNSEEN_INDICATORS),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.train_cities.intersection(&self.test_cities).next() {
            return Err(Error::InvalidSplit(format!("city `{c}` is in both train and test sets")));
        }
        if let Some(i) = self
            .train_indicators
            .intersection(&self.test_only_indicators)
            .next()
        {
            return Err(Error::InvalidSplit(format!(
                "indicator `{i}` is in both train and test-only sets"
            )));
        }
        Ok(())
    }

    pub fn is_train_city(&self, city: &str) -> Result<bool> {
        if self.train_cities.contains(city) {
            Ok(true)
        } else if self.test_cities.contains(city) {
            Ok(false)
        } else {
            Err(Error::UnassignedCity(city.to_owned()))
        }
    }

    /// Evaluation category of predicting `indicator` for a region in `city`.
    pub fn categorize(&self, city: &str, indicator: &str) -> Result<Category> {
        let train_city = self.is_train_city(city)?;
        if self.test_only_indicators.contains(indicator) {
            Ok(Category::UnseenIndicator)
        } else if self.train_indicators.contains(indicator) {
            Ok(if train_city {
                Category::InDomain
            } else {
                Category::UnseenCity
            })
        } else {
            Err(Error::UnassignedIndicator(indicator.to_owned()))
        }
    }
}

/// Partitions regions by city into (train, test).
pub fn apply_split(regions: &[Region], cfg: &SplitConfig) -> Result<(Vec<Region>, Vec<Region>)> {
    cfg.validate()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in regions {
        if cfg.is_train_city(&r.city)? {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}
