//! Threshold families defining the interval-membership hash functions.

use alloc::vec::Vec;

use rand::Rng;

use crate::config::EncodingConfig;
use crate::error::{Error, Result};
use crate::rng;

/// The thresholds `r_1..r_s` for one attribute.
///
/// Bit `i` of an encoding is set when the value lies in `[r_i - t, r_i + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    thresholds: Vec<f64>,
    attribute_index: usize,
}

impl HashFamily {
    /// Wraps explicit thresholds, checking they lie in the widened range.
    pub fn from_thresholds(
        thresholds: Vec<f64>,
        config: &EncodingConfig,
        attribute_index: usize,
    ) -> Result<Self> {
        config.validate()?;
        if thresholds.len() != config.s() {
            return Err(Error::LengthMismatch {
                left: thresholds.len(),
                right: config.s(),
            });
        }
        let (lo, hi) = config.threshold_range();
        if thresholds.iter().any(|r| !(*r >= lo && *r <= hi)) {
            return Err(Error::param("threshold outside [lower - t, upper + t]"));
        }
        Ok(HashFamily {
            thresholds,
            attribute_index,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn attribute_index(&self) -> usize {
        self.attribute_index
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Draws `s` thresholds i.i.d. uniform on `[lower - t, upper + t)` from the
/// stream keyed by `(seed, attribute_index)`.
///
/// Uniform thresholds over the widened range make the expected number of set
/// bits `s·2t/μ` for every input in `[lower, upper]`.
pub fn derive_hash_family(config: &EncodingConfig, attribute_index: usize) -> Result<HashFamily> {
    config.validate()?;
    let mut stream = rng::derive_stream(config.seed(), rng::THRESHOLDS, attribute_index as u64);
    let (lo, _) = config.threshold_range();
    let mu = config.mu();
    let thresholds = (0..config.s())
        .map(|_| lo + mu * stream.random::<f64>())
        .collect();
    Ok(HashFamily {
        thresholds,
        attribute_index,
    })
}
