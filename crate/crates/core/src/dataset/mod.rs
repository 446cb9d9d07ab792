//! Region ingestion, indicator binning, splits and task generation.

mod binning;
mod features;
mod io;
mod split;
pub mod synth;
mod taskgen;

pub use features::{task_features, RegionIndex};
pub use binning::{bin_indicator, bin_regions, BinningResult};
pub use io::{load_regions, load_tasks, read_regions, read_tasks, save_regions, save_tasks, write_jsonl};
pub use split::{apply_split, SplitConfig};
pub use taskgen::{
    indicator_tasks_for_all,
    gen_counting_tasks, gen_geolocation_tasks, gen_indicator_tasks, gen_pattern_tasks,
    gen_ranking_pairs, gen_spatial_triplets, generate_suite, neighborhood, next_term, GeneratedTasks,
    KindCounts, TaskGenConfig, TaskSuite, TripletMode, REFERENCE_INSTANCE_COUNTS,
};

/// The six perceptual keywords paired with the indicator tasks.
pub const KEYWORDS: [&str; 6] = [
    "person",
    "vehicle",
    "greenery",
    "road infrastructure",
    "street furniture",
    "building",
];

/// Indicators seen during training and evaluation.
pub const SEEN_INDICATORS: [&str; 5] = [
    "GDP",
    "Population",
    "Public Transport",
    "Mental Health",
    "Bachelor Ratio",
];

/// Indicators held out for evaluation only.
pub const UNSEEN_INDICATORS: [&str; 6] = [
    "House Price",
    "Drive Ratio",
    "Violent Crime",
    "Accessibility to Health",
    "Life Expectancy",
    "Building Height",
];

pub const TRAIN_CITIES: [&str; 10] = [
    "Beijing", "New York", "Cape Town", "London", "Mumbai", "Moscow", "Sydney", "Paris", "Tokyo",
    "Chicago",
];

pub const TEST_CITIES: [&str; 7] = [
    "Shanghai",
    "San Francisco",
    "Sao Paulo",
    "Nairobi",
    "Leeds",
    "Liverpool",
    "Birmingham",
];
