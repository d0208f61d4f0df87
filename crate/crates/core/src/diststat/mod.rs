//! Error distributions of model populations: EDFs, the KS test,
//! complexity normalization and random search simulation.

mod compare;
mod edf;
mod ks;
mod search;
mod weights;

pub use compare::{compare, compare_pools, Comparison};
pub use edf::{complexity_edf, edf, edf_area, EdfCurve, Sample, WeightedPool, WeightedSample};
pub use ks::{ks_pvalue, ks_pvalue_effective, ks_statistic};
pub use search::{
    default_trials, percentile, point_vs_distribution, random_search_curve, random_search_sim, subsample_ks,
    PointVsDistribution, RandomSearchResult, SubsampleKs, DEFAULT_REPEATS, MIN_TRIALS,
};
pub use weights::{bucket_stats, normalize_weights, BinScale, Binning, BucketStat, DEFAULT_BINS};
