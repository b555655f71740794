//! Distance estimation when attributes or records are split across parties.
//!
//! Horizontally, each party encodes whole records and the aggregator combines
//! per-attribute estimates. Vertically, Alice holds the first attributes and
//! computes her part of the squared distance exactly; Bob's remainder `R²` is
//! estimated either per attribute (naive) or with a single encoding of the
//! two scalars `S1 = Σ(a² + b²)` and `S2 = Σ 2ab`, whose difference is `R²`.

use alloc::vec::Vec;

use rand::Rng;

use crate::bitvec::BitVector;
use crate::config::{EncodingConfig, Mechanism, Schema};
use crate::distance::Estimator;
use crate::encoder::{bv_encode, dpbv_encode, EncodedRecord};
use crate::error::{Error, Result};
use crate::hash::{derive_hash_family, HashFamily};
use crate::rng;

fn check_pair(a: &[BitVector], b: &[BitVector], estimators: usize) -> Result<()> {
    if a.len() != b.len() || a.len() != estimators {
        return Err(Error::DimensionMismatch {
            expected: estimators,
            found: a.len().min(b.len()),
        });
    }
    Ok(())
}

/// Per-attribute estimates clamped to `[0, 2t]`.
fn attribute_estimates<'a>(
    a: &'a [BitVector],
    b: &'a [BitVector],
    estimators: &'a [Estimator],
) -> impl Iterator<Item = Result<f64>> + 'a {
    a.iter()
        .zip(b)
        .zip(estimators)
        .map(|((x, y), e)| Ok(e.clamped(x.hamming(y)?)))
}

/// Euclidean distance between two encoded records of the same schema,
/// `sqrt(Σ_i e_i²)` over per-attribute clamped estimates.
pub fn horizontal_estimate(a: &EncodedRecord, b: &EncodedRecord, schema: &Schema) -> Result<f64> {
    let fp = schema.fingerprint();
    if a.fingerprint != fp || b.fingerprint != fp {
        return Err(Error::IncompatibleEncoding("configuration fingerprint mismatch".into()));
    }
    if a.mechanism != b.mechanism {
        return Err(Error::IncompatibleEncoding("mixed mechanisms".into()));
    }
    let est: Vec<Estimator> = schema
        .attribute_configs()
        .iter()
        .map(|c| Estimator::new(c, a.mechanism))
        .collect();
    check_pair(&a.vectors, &b.vectors, est.len())?;
    let mut sum = 0.0;
    for e in attribute_estimates(&a.vectors, &b.vectors, &est) {
        let e = e?;
        sum += e * e;
    }
    Ok(libm::sqrt(sum))
}

/// `R̂² = Σ_i e_i²` over Bob's attributes, one encoding per attribute.
pub fn vertical_estimate_naive(
    a: &[BitVector],
    b: &[BitVector],
    configs: &[EncodingConfig],
    mechanism: Mechanism,
) -> Result<f64> {
    let est: Vec<Estimator> = configs.iter().map(|c| Estimator::new(c, mechanism)).collect();
    check_pair(a, b, est.len())?;
    let mut sum = 0.0;
    for e in attribute_estimates(a, b, &est) {
        let e = e?;
        sum += e * e;
    }
    Ok(sum)
}

/// `(S1, S2) = (Σ a_i² + b_i², Σ 2·a_i·b_i)`, so that `S1 - S2 = Σ (a_i - b_i)²`.
pub fn decomposition_scalars(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("decomposition needs finite non-negative values"));
    }
    let s1 = a.iter().zip(b).map(|(x, y)| x * x + y * y).sum();
    let s2 = a.iter().zip(b).map(|(x, y)| 2.0 * x * y).sum();
    Ok((s1, s2))
}

/// Scalar encoding used by the decomposition estimator.
///
/// Both scalars lie in `[0, μ_max]` with `μ_max = 2·Σ upper_i²`. The window
/// half-width is `μ_max/2`, so every pair `(S1, S2)` is inside the local view.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionConfig {
    config: EncodingConfig,
    family: HashFamily,
}

impl DecompositionConfig {
    /// `attributes` are Bob's per-attribute configurations; their lower bounds
    /// must be non-negative. `s` is the length of each scalar encoding.
    pub fn new(attributes: &[EncodingConfig], s: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::param("no attributes to decompose"));
        }
        if attributes.iter().any(|c| c.lower() < 0.0) {
            return Err(Error::param("decomposition needs non-negative attribute ranges"));
        }
        let mu_max: f64 = 2.0 * attributes.iter().map(|c| c.upper() * c.upper()).sum::<f64>();
        let seed = rng::derive_seed(seed, rng::DECOMPOSITION, attributes.len() as u64);
        let config = EncodingConfig::new(0.0, mu_max, mu_max / 2.0, s, epsilon, seed)?;
        let family = derive_hash_family(&config, 0)?;
        Ok(DecompositionConfig { config, family })
    }

    pub fn mu_max(&self) -> f64 {
        self.config.upper()
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    /// Bob's side: encodes `(S1, S2)` for one pair of records.
    pub fn encode_pair<R: Rng + ?Sized>(
        &self,
        a: &[f64],
        b: &[f64],
        mechanism: Mechanism,
        rng: &mut R,
    ) -> Result<(BitVector, BitVector)> {
        let (s1, s2) = decomposition_scalars(a, b)?;
        let (s1, s2) = (s1.min(self.mu_max()), s2.min(self.mu_max()));
        match mechanism {
            Mechanism::Bv => Ok((
                bv_encode(s1, &self.family, &self.config)?,
                bv_encode(s2, &self.family, &self.config)?,
            )),
            Mechanism::Dpbv => Ok((
                dpbv_encode(s1, &self.family, &self.config, rng)?,
                dpbv_encode(s2, &self.family, &self.config, rng)?,
            )),
        }
    }

    /// Aggregator's side: the (unclamped) estimate of `R² = S1 - S2`.
    pub fn estimate(&self, v1: &BitVector, v2: &BitVector, mechanism: Mechanism) -> Result<f64> {
        Ok(Estimator::new(&self.config, mechanism).raw(v1.hamming(v2)?))
    }
}

/// Convenience wrapper: encode and estimate `R²` for one pair in one call.
pub fn vertical_estimate_decomposition<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    dec: &DecompositionConfig,
    mechanism: Mechanism,
    rng: &mut R,
) -> Result<f64> {
    let (v1, v2) = dec.encode_pair(a, b, mechanism, rng)?;
    dec.estimate(&v1, &v2, mechanism)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalMethod {
    Naive,
    Decomposition,
}

/// Alice's exact part `L²` and the estimated remainder `R̂²` of a squared
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalPair {
    pub l_squared: f64,
    pub r_squared_estimate: f64,
    pub method: VerticalMethod,
}

impl VerticalPair {
    pub fn distance(&self) -> f64 {
        libm::sqrt(self.l_squared.max(0.0) + self.r_squared_estimate.max(0.0))
    }
}

/// `L² = Σ_{i ≤ l} (a_i - b_i)²`, computed by Alice.
pub fn partial_squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::distance::dpbv_estimate;
    use crate::encoder::Encoder;
    use crate::rng::derive_stream;
    use alloc::vec;

    fn attrs(d: usize) -> Vec<EncodingConfig> {
        (0..d)
            .map(|_| EncodingConfig::new(0.0, 5.0, 2.5, 1000, 2.0, 1).unwrap())
            .collect()
    }

    #[test]
    fn scalars_recover_squared_remainder() {
        let (s1, s2) = decomposition_scalars(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!((s1, s2), (25.0, 0.0));
        assert_eq!(s1 - s2, 25.0);
        let (s1, s2) = decomposition_scalars(&[1.5, 2.0, 0.0], &[1.5, 2.0, 0.0]).unwrap();
        assert_eq!(s1, s2);
        assert!(decomposition_scalars(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn expected_bv_decode_is_exact() {
        // With the expected Hamming distance in place of the observed one, the
        // affine decode returns S1 - S2 exactly.
        let dec = DecompositionConfig::new(&attrs(2), 1000, 2.0, 3).unwrap();
        assert_eq!(dec.mu_max(), 100.0);
        assert_eq!(dec.config().mu(), 200.0);
        let est = Estimator::new(dec.config(), Mechanism::Bv);
        let h = est.expected_hamming(25.0);
        assert!((dec.config().mu() * h / 2000.0 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_decomposition_concentrates() {
        let dec = DecompositionConfig::new(&attrs(2), 4000, 2.0, 3).unwrap();
        let mut total = 0.0;
        let trials = 200;
        for k in 0..trials {
            let dk = DecompositionConfig::new(&attrs(2), 4000, 2.0, k).unwrap();
            let mut r = derive_stream(0, "x", k);
            total += vertical_estimate_decomposition(&[3.0, 4.0], &[0.0, 0.0], &dk, Mechanism::Bv, &mut r).unwrap();
        }
        let mean = total / trials as f64;
        // Per-run sd is mu * sqrt(w(1-w)/s) / 2 with w = 25/200.
        let sd = 200.0 * libm::sqrt(0.125 * 0.875 / 4000.0) / 2.0;
        assert!((mean - 25.0).abs() < 3.0 * sd / libm::sqrt(trials as f64), "{mean}");
        let mut r = derive_stream(0, "y", 0);
        let same = vertical_estimate_decomposition(&[1.0, 2.0], &[1.0, 2.0], &dec, Mechanism::Bv, &mut r).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn naive_single_attribute_is_squared_scalar() {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 1000, 2.0, 1).unwrap();
        let f = derive_hash_family(&c, 0).unwrap();
        let mut r = derive_stream(0, "n", 0);
        let a = dpbv_encode(10.0, &f, &c, &mut r).unwrap();
        let b = dpbv_encode(16.0, &f, &c, &mut r).unwrap();
        let e = dpbv_estimate(a.hamming(&b).unwrap(), &c);
        let naive = vertical_estimate_naive(std::slice::from_ref(&a), &[b], &[c], Mechanism::Dpbv).unwrap();
        assert!((naive - e * e).abs() < 1e-12);
        assert_eq!(vertical_estimate_naive(std::slice::from_ref(&a), std::slice::from_ref(&a), &[c], Mechanism::Bv).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_estimate_reductions() {
        let base = EncodingConfig::new(0.0, 50.0, 25.0, 500, 2.0, 1).unwrap();
        let enc = Encoder::new(Schema::uniform(base, 3).unwrap(), Mechanism::Bv).unwrap();
        let r = Record::new(0, vec![1.0, 2.0, 3.0]);
        let a = enc.encode(&r, 0).unwrap();
        assert_eq!(horizontal_estimate(&a, &a, enc.schema()).unwrap(), 0.0);

        let enc1 = Encoder::new(Schema::uniform(base, 1).unwrap(), Mechanism::Dpbv).unwrap();
        let a = enc1.encode(&Record::new(0, vec![4.0]), 1).unwrap();
        let b = enc1.encode(&Record::new(1, vec![9.0]), 1).unwrap();
        let h = a.vectors[0].hamming(&b.vectors[0]).unwrap();
        assert_eq!(horizontal_estimate(&a, &b, enc1.schema()).unwrap(), dpbv_estimate(h, &base));
        assert!(horizontal_estimate(&a, &b, enc.schema()).is_err());
    }

    #[test]
    fn vertical_pair_combines_parts() {
        let p = VerticalPair {
            l_squared: 9.0,
            r_squared_estimate: 16.0,
            method: VerticalMethod::Naive,
        };
        assert_eq!(p.distance(), 5.0);
        let q = VerticalPair { r_squared_estimate: -4.0, ..p };
        assert_eq!(q.distance(), 3.0);
        assert_eq!(partial_squared_distance(&[1.0, 2.0], &[4.0, 6.0]).unwrap(), 25.0);
    }
}
