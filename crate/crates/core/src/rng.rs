//! Deterministic, domain-separated random streams.
//!
//! Every stream is a ChaCha12 generator keyed by `SHA-256(label, seed, index)`.
//! Thresholds, randomized-response noise, cluster initialisation and party
//! seeds use different labels, so no two of them ever share a keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha12Rng;

pub const THRESHOLDS: &str = "thresholds";
pub const NOISE: &str = "noise";
pub const DECOMPOSITION: &str = "decomposition";
pub const PARTY: &str = "party";
pub const INIT: &str = "init";
pub const PERTURB: &str = "perturb";

fn key(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"dpbv-stream/v1");
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn derive_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha12Rng::from_seed(key(seed, label, index))
}

/// A child seed, for handing a party or a sub-task its own seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let k = key(seed, label, index);
    let mut head = [0u8; 8];
    head.copy_from_slice(&k[..8]);
    u64::from_le_bytes(head)
}
