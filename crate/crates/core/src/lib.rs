//! Distance-aware anonymization of numerical data with local differential
//! privacy, and clustering carried out entirely on the anonymized bit vectors.
//!
//! A scalar `x` in `[lower, upper]` is embedded into `s` bits. Bit `i` is set
//! when `x` falls inside the window `[r_i - t, r_i + t]` around a random
//! threshold `r_i` (the *BV* encoding). The *DPBV* encoding then passes every
//! bit through randomized response: it is kept with probability
//! `e^ε / (e^ε + 1)` and flipped otherwise. Hamming distances between encodings
//! are affine in the Euclidean distance of the inputs as long as the inputs are
//! within `2t` of each other, so pairwise distances, and therefore
//! distance-only clustering, survive the anonymization.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature spreads matrix construction and cluster
//! reassignment over a rayon pool.
//!
//! ```
//! use dpbv_core::{derive_hash_family, bv_encode, hamming, bv_estimate, EncodingConfig};
//!
//! let config = EncodingConfig::new(0.0, 50.0, 25.0, 1000, 2.0, 42).unwrap();
//! let family = derive_hash_family(&config, 0).unwrap();
//! let a = bv_encode(10.0, &family, &config).unwrap();
//! let b = bv_encode(14.0, &family, &config).unwrap();
//! let estimate = bv_estimate(hamming(&a, &b).unwrap(), &config);
//! assert!((estimate - 4.0).abs() < 2.0);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bitvec;
pub mod cluster;
pub mod config;
pub mod consistence;
pub mod dataset;
pub mod distance;
pub mod encoder;
mod error;
pub mod hash;
pub mod multiparty;
pub mod privacy;
pub mod rng;

pub use bitvec::BitVector;
pub use cluster::{
    adp_transform, dbscan, dbscan_hamming, kcluster, kmeans, nmi, point_to_cluster_distance,
    rsp_transform, ClusterAssignment, DbscanOptions, KClusterOptions, KClusterResult,
    KMeansOptions, NOISE,
};
pub use config::{Attribute, EncodingConfig, Fingerprint, Mechanism, Schema};
pub use consistence::{distance_consistence, ConsistenceOptions, ConsistenceReport};
pub use dataset::{validate_dataset, Dataset, RangePolicy, Record, ValidationIssue, ValidationReport};
pub use distance::{
    average_estimation_error, build_distance_matrix, build_hamming_matrix, bv_estimate,
    dpbv_estimate, dpbv_estimate_raw, hamming, Dissimilarity, DistanceMatrix, Estimator,
    HammingMatrix,
};
pub use encoder::{
    bv_encode, dpbv_encode, encode_record, insert_mediating_values, EncodedRecord, Encoder,
    Mediated,
};
pub use error::{Error, Result};
pub use hash::{derive_hash_family, HashFamily};
pub use privacy::{delta_of, error_bound, expected_popcount, s_of, PrivacyParams};
