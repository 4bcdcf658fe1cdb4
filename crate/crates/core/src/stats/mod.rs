//! Distance-to-training-set analyses.

mod binned;
mod bootstrap;
mod distance;
mod ks;
mod logistic;
mod report;

pub use binned::{binned_accuracy, Bin};
pub use bootstrap::{bootstrap_ci, percentile_sorted, shifted_mean, Interval, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
pub use distance::{cosine_distance, nn_distance, Metric};
pub use ks::{ks_statistic, KsResult};
pub use logistic::{
    design_matrix, log_likelihood, logistic_fit, LogisticFit, COEFFICIENT_NAMES, CONVERGENCE_TOL, MAX_ITERATIONS,
    RIDGE_JITTER,
};
pub use report::{correctness_by_hull_table, DistanceRecord, DistanceReport, GroupMean, Space};
