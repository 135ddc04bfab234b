//! User role discovery from check-in logs.
//!
//! The pipeline turns raw check-ins into per-user context × view count
//! matrices ([`features`]), clusters the flattened matrices with k-means++
//! ([`kmeans`]) and then stabilizes the resulting role partition with a
//! greedy, silhouette-rewarded reassignment loop ([`stabilize`]) until both
//! the average silhouette and the round-to-round membership churn meet their
//! thresholds.
//!
//! [`quality`] holds the role-level silhouette and randomness metrics,
//! [`report`] the before/after comparison over several clustering runs and
//! [`testkit`] synthetic data plus brute-force oracles.

pub mod error;
pub mod features;
pub mod ingest;
pub mod kmeans;
pub mod quality;
pub mod report;
pub mod seed;
pub mod stabilize;
pub mod testkit;

pub use error::{Error, Result};
pub use features::{ContextAxis, FeatureMatrix, FeatureSet, Normalization, ViewAxis};
pub use ingest::{CheckIn, GeoPoint, RootCategoryMap};
pub use kmeans::{ClusterModel, ElbowCurve};
pub use quality::{Partition, SilhouetteBreakdown};
pub use stabilize::{StabilizationReport, StabilizeConfig, StateMatrix};

/// Squared Euclidean distance between two equal-length vectors.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance between two equal-length vectors.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}
