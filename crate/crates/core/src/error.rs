use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("root category map entry {key:?} maps to unknown root label {label:?}")]
    UnknownRootLabel { key: String, label: String },

    #[error("root category map has duplicate key {0:?}")]
    DuplicateCategoryKey(String),

    #[error("category {0:?} does not resolve to a root category")]
    UnresolvedCategory(String),

    #[error("user {0:?} has no check-ins")]
    NoCheckIns(String),

    #[error("no home location for user {0:?}")]
    MissingHome(String),

    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),

    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooFewPoints { k: usize, distinct: usize },

    #[error("elbow selection needs at least 3 points with consecutive k")]
    ElbowTooShort,

    #[error("silhouette needs at least two roles with centroids")]
    SingleRole,

    #[error("cannot take the centroid of an empty set")]
    EmptySet,

    #[error("partitions do not share the same role list")]
    RoleMismatch,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("oracle instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
