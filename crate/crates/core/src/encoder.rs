//! BV and DPBV embeddings of scalar values, applied per attribute.

use alloc::vec::Vec;

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::bitvec::BitVector;
use crate::config::{EncodingConfig, Fingerprint, Mechanism, Schema};
use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::hash::{derive_hash_family, HashFamily};
use crate::privacy::flip_probability;
use crate::rng;

fn check_input(x: f64, family: &HashFamily, config: &EncodingConfig) -> Result<()> {
    if family.len() != config.s() {
        return Err(Error::LengthMismatch {
            left: family.len(),
            right: config.s(),
        });
    }
    if !config.contains(x) {
        return Err(Error::OutOfRange {
            attribute: family.attribute_index(),
            lower: config.lower(),
            upper: config.upper(),
        });
    }
    Ok(())
}

/// Bit `i` is set iff `x ∈ [r_i - t, r_i + t]`.
pub fn bv_encode(x: f64, family: &HashFamily, config: &EncodingConfig) -> Result<BitVector> {
    check_input(x, family, config)?;
    let t = config.t();
    Ok(BitVector::from_bools(
        family.thresholds().iter().map(|r| libm::fabs(x - r) <= t),
    ))
}

/// BV encoding followed by independent per-bit randomized response: each bit
/// survives with probability `e^ε/(e^ε+1)` and is flipped otherwise. The
/// thresholds are fixed by `family`; only the flips come from `rng`.
pub fn dpbv_encode<R: Rng + ?Sized>(
    x: f64,
    family: &HashFamily,
    config: &EncodingConfig,
    rng: &mut R,
) -> Result<BitVector> {
    let mut bits = bv_encode(x, family, config)?;
    randomized_response(&mut bits, config.epsilon(), rng);
    Ok(bits)
}

/// Flips every bit independently with probability `1/(e^ε+1)`.
pub fn randomized_response<R: Rng + ?Sized>(bits: &mut BitVector, epsilon: f64, rng: &mut R) {
    let q = flip_probability(epsilon);
    let coin = Bernoulli::new(q).expect("flip probability lies in [0, 1/2]");
    let mut mask = BitVector::zeros(bits.len());
    for i in 0..bits.len() {
        if coin.sample(rng) {
            mask.set(i, true);
        }
    }
    bits.xor_assign(&mask).expect("mask has the same length");
}

/// The `d` encodings of one record, in attribute order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedRecord {
    pub id: u64,
    pub mechanism: Mechanism,
    pub fingerprint: Fingerprint,
    pub vectors: Vec<BitVector>,
}

impl EncodedRecord {
    pub fn dimension(&self) -> usize {
        self.vectors.len()
    }
}

/// Encodes attribute `i` of `record` with `families[i]`. Under DPBV each
/// attribute draws its own flips from `rng`.
pub fn encode_record<R: Rng + ?Sized>(
    record: &Record,
    families: &[HashFamily],
    schema: &Schema,
    mechanism: Mechanism,
    rng: &mut R,
) -> Result<EncodedRecord> {
    let d = schema.dimension();
    if families.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: families.len(),
        });
    }
    if record.values.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: record.values.len(),
        });
    }
    let mut vectors = Vec::with_capacity(d);
    for (i, (x, family)) in record.values.iter().zip(families).enumerate() {
        let config = schema.attribute_config(i)?;
        let v = match mechanism {
            Mechanism::Bv => bv_encode(*x, family, &config)?,
            Mechanism::Dpbv => dpbv_encode(*x, family, &config, rng)?,
        };
        vectors.push(v);
    }
    Ok(EncodedRecord {
        id: record.id,
        mechanism,
        fingerprint: schema.fingerprint(),
        vectors,
    })
}

/// A custodian-side encoder: the schema's hash families plus a mechanism.
///
/// Noise for a record comes from the stream keyed by `(noise_seed, record.id)`,
/// so an encoding depends only on the record and the custodian's noise seed,
/// never on the order records are processed in.
#[derive(Debug, Clone)]
pub struct Encoder {
    schema: Schema,
    families: Vec<HashFamily>,
    mechanism: Mechanism,
}

impl Encoder {
    pub fn new(schema: Schema, mechanism: Mechanism) -> Result<Self> {
        let families = (0..schema.dimension())
            .map(|i| derive_hash_family(&schema.attribute_config(i)?, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoder {
            schema,
            families,
            mechanism,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn families(&self) -> &[HashFamily] {
        &self.families
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn encode(&self, record: &Record, noise_seed: u64) -> Result<EncodedRecord> {
        let mut stream = rng::derive_stream(noise_seed, rng::NOISE, record.id);
        encode_record(record, &self.families, &self.schema, self.mechanism, &mut stream)
    }

    pub fn encode_all(&self, records: &[Record], noise_seed: u64) -> Result<Vec<EncodedRecord>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            records
                .par_iter()
                .map(|r| self.encode(r, noise_seed))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            records.iter().map(|r| self.encode(r, noise_seed)).collect()
        }
    }
}

/// Sorted values padded with synthetic points so that no two neighbours are
/// `2t` or more apart. `synthetic[i]` marks inserted entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Mediated {
    pub values: Vec<f64>,
    pub synthetic: Vec<bool>,
}

/// Inserts evenly spaced synthetic values into every gap of at least `2t`,
/// making pairs that would otherwise be unreachable reachable through chains
/// of local-view hops.
pub fn insert_mediating_values(values: &[f64], t: f64) -> Result<Mediated> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::param("t must be positive"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("values must be finite"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("values must be sorted ascending"));
    }
    let width = 2.0 * t;
    let mut out = Mediated {
        values: Vec::with_capacity(values.len()),
        synthetic: Vec::with_capacity(values.len()),
    };
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            let prev = values[i - 1];
            let gap = v - prev;
            if gap >= width {
                // floor(gap / 2t) + 1 segments are each strictly shorter than 2t.
                let inserts = libm::floor(gap / width) as usize;
                let step = gap / (inserts + 1) as f64;
                for k in 1..=inserts {
                    out.values.push(prev + step * k as f64);
                    out.synthetic.push(true);
                }
            }
        }
        out.values.push(v);
        out.synthetic.push(false);
    }
    Ok(out)
}
