//! Datasets, metrics, and the two experiments behind the CLI.

pub mod dataset;
pub mod experiments;
pub mod metrics;

pub use dataset::{gen_test_set, gen_training_set, DatasetManifest, ManifestEntry, Split};
pub use experiments::{
    experiment_quantile_sweep, experiment_time_sim, test_instances, Method, SweepRow, TestInstance, TimesimConfig,
    TimesimRow, TimesimRun, ETA_GRID,
};
pub use metrics::{metrics, Ratios};
