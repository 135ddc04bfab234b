//! Shared fixtures for the criterion benches.

use rolestab_core::features::FeatureTable;
use rolestab_core::kmeans::{kmeans_pp, LloydConfig};
use rolestab_core::quality::Partition;
use rolestab_core::report::partition_of;
use rolestab_core::testkit::{gen_clusters, SyntheticSpec};

/// Nine blobs of `per` users in the 216 dimensions of the hour-by-root table.
pub fn blobs(per: usize, separation: f64) -> FeatureTable {
    gen_clusters(&SyntheticSpec::new(9, per, 216, separation, 42)).expect("valid spec").table
}

/// The k-means++ partition of `table` into nine roles.
pub fn clustered(table: &FeatureTable) -> Partition {
    let model = kmeans_pp(&table.rows, 9, 7, LloydConfig::default()).expect("enough points");
    partition_of(table, &model).expect("consistent model")
}
