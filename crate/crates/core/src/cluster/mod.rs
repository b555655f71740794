//! Distance-only clustering, its evaluation, and the perturbation baselines.

mod dbscan;
mod kcluster;
mod kmeans;
mod nmi;
mod perturb;

use alloc::vec::Vec;

pub use dbscan::{dbscan, dbscan_hamming, DbscanOptions};
pub use kcluster::{kcluster, point_to_cluster_distance, KClusterOptions, KClusterResult};
pub use kmeans::{kmeans, KMeansOptions};
pub use nmi::nmi;
pub use perturb::{adp_transform, rsp_transform};

/// Label given to DBSCAN noise points.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Cluster index in `[0, k)` per point, or [`NOISE`].
    pub labels: Vec<i64>,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
}
