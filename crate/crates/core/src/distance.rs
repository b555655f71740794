//! Euclidean distance estimation from Hamming distances, and pairwise matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::bitvec::{xor_popcount, BitVector};
use crate::config::{EncodingConfig, Fingerprint, Mechanism, Schema};
use crate::encoder::EncodedRecord;
use crate::error::{Error, Result};
use crate::privacy::{correlation, flip_probability, keep_probability};

pub fn hamming(a: &BitVector, b: &BitVector) -> Result<u32> {
    a.hamming(b)
}

/// Affine map between Hamming distance and Euclidean distance for one
/// attribute. Inside the local view (`d ≤ 2t`):
///
/// `E[d_H] = s·(2pq + (2d/μ)·f²)`, with `f = 1`, `pq = 0` under plain BV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    mechanism: Mechanism,
    mu: f64,
    s: f64,
    t: f64,
    f2: f64,
    floor: f64,
}

impl Estimator {
    pub fn new(config: &EncodingConfig, mechanism: Mechanism) -> Self {
        let (f2, floor) = match mechanism {
            Mechanism::Bv => (1.0, 0.0),
            Mechanism::Dpbv => {
                let e = config.epsilon();
                let f = correlation(e);
                (f * f, 2.0 * keep_probability(e) * flip_probability(e))
            }
        };
        Estimator {
            mechanism,
            mu: config.mu(),
            s: config.s() as f64,
            t: config.t(),
            f2,
            floor,
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Unbiased (unclamped) estimate; negative values are possible under DPBV.
    #[inline]
    pub fn raw(&self, d_h: u32) -> f64 {
        self.raw_from(d_h as f64)
    }

    /// [`raw`](Self::raw) for a fractional Hamming distance, e.g. an expected
    /// or averaged one.
    #[inline]
    pub fn raw_from(&self, d_h: f64) -> f64 {
        self.mu / (2.0 * self.s * self.f2) * (d_h - self.s * self.floor)
    }

    /// [`raw`](Self::raw) clamped to the local view `[0, 2t]`.
    #[inline]
    pub fn clamped(&self, d_h: u32) -> f64 {
        self.raw(d_h).clamp(0.0, 2.0 * self.t)
    }

    /// Expected Hamming distance between encodings of two values `d` apart,
    /// for `d ≤ 2t`.
    pub fn expected_hamming(&self, d: f64) -> f64 {
        self.s * (self.floor + 2.0 * d / self.mu * self.f2)
    }

    /// Hamming distance corresponding to a Euclidean radius, for neighbourhood
    /// tests done directly in Hamming space. `eps` must lie in `[0, 2t]`.
    pub fn hamming_threshold(&self, eps: f64) -> Result<f64> {
        if !(eps >= 0.0 && eps <= 2.0 * self.t) {
            return Err(Error::param("radius must lie inside the local view [0, 2t]"));
        }
        Ok(self.expected_hamming(eps))
    }
}

/// `μ·d_H/(2s)`.
pub fn bv_estimate(d_h: u32, config: &EncodingConfig) -> f64 {
    Estimator::new(config, Mechanism::Bv).raw(d_h)
}

/// Unbiased DPBV estimate `μ/(2s f²)·(d_H − 2s·e^ε/(e^ε+1)²)`.
pub fn dpbv_estimate_raw(d_h: u32, config: &EncodingConfig) -> f64 {
    Estimator::new(config, Mechanism::Dpbv).raw(d_h)
}

/// [`dpbv_estimate_raw`] clamped to `[0, 2t]`.
pub fn dpbv_estimate(d_h: u32, config: &EncodingConfig) -> f64 {
    Estimator::new(config, Mechanism::Dpbv).clamped(d_h)
}

/// Anything that yields pairwise dissimilarities over `len()` points.
pub trait Dissimilarity: Sync {
    fn len(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Symmetric `n×n` matrix of distances with per-entry revision rounds.
///
/// A revision of 0 marks an original estimate; `k > 0` marks an entry rewritten
/// in round `k` of the consistence pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    revisions: Vec<u32>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix {
            n,
            values: vec![0.0; n * n],
            revisions: vec![0; n * n],
        }
    }

    /// Fills the strict upper triangle from `f(i, j)` and mirrors it.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let rows = upper_rows(n, |i| ((i + 1)..n).map(|j| f(i, j)).collect());
        DistanceMatrix::from_upper_rows(n, rows)
    }

    fn from_upper_rows(n: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut m = DistanceMatrix::zeros(n);
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                m.values[i * n + j] = v;
                m.values[j * n + i] = v;
            }
        }
        m
    }

    /// Wraps a dense row-major matrix after checking shape, symmetry, a zero
    /// diagonal and finite non-negative entries.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::param("diagonal must be zero"));
            }
            for j in (i + 1)..n {
                let v = values[i * n + j];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::param("entries must be finite and non-negative"));
                }
                if v != values[j * n + i] {
                    return Err(Error::param("matrix must be symmetric"));
                }
            }
        }
        Ok(DistanceMatrix {
            n,
            values,
            revisions: vec![0; n * n],
        })
    }

    /// Exact Euclidean distances between points.
    pub fn euclidean(points: &[Vec<f64>]) -> Self {
        DistanceMatrix::from_fn(points.len(), |i, j| euclidean(&points[i], &points[j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn revision(&self, i: usize, j: usize) -> u32 {
        self.revisions[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn revisions(&self) -> &[u32] {
        &self.revisions
    }

    pub(crate) fn set_revised(&mut self, i: usize, j: usize, value: f64, round: u32) {
        let n = self.n;
        self.values[i * n + j] = value;
        self.values[j * n + i] = value;
        self.revisions[i * n + j] = round;
        self.revisions[j * n + i] = round;
    }

    /// Adds `c` to every entry, the diagonal included. The result is a
    /// dissimilarity for clustering, not a distance matrix.
    pub fn shifted(&self, c: f64) -> Self {
        DistanceMatrix {
            n: self.n,
            values: self.values.iter().map(|v| v + c).collect(),
            revisions: self.revisions.clone(),
        }
    }
}

impl Dissimilarity for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Hamming distances between single-attribute encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HammingMatrix {
    n: usize,
    values: Vec<u32>,
}

impl HammingMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.n + j]
    }
}

#[cfg(feature = "parallel")]
fn upper_rows<T: Send>(n: usize, row: impl Fn(usize) -> Vec<T> + Sync) -> Vec<Vec<T>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(&row).collect()
}

#[cfg(not(feature = "parallel"))]
fn upper_rows<T>(n: usize, row: impl Fn(usize) -> Vec<T>) -> Vec<Vec<T>> {
    (0..n).map(row).collect()
}

/// Records flattened into one word array, attribute-major within a record.
struct Packed {
    words: Vec<u64>,
    per_attr: usize,
    d: usize,
}

impl Packed {
    fn new(encoded: &[EncodedRecord], schema: &Schema) -> Result<(Self, Mechanism)> {
        let d = schema.dimension();
        let s = schema.base().s();
        let fingerprint: Fingerprint = schema.fingerprint();
        let mechanism = encoded.first().map_or(Mechanism::Bv, |r| r.mechanism);
        let per_attr = s.div_ceil(64);
        let mut words = Vec::with_capacity(encoded.len() * d * per_attr);
        for r in encoded {
            if r.mechanism != mechanism {
                return Err(Error::IncompatibleEncoding("mixed mechanisms".into()));
            }
            if r.fingerprint != fingerprint {
                return Err(Error::IncompatibleEncoding(alloc::format!(
                    "record {} was encoded under configuration {}, expected {}",
                    r.id,
                    r.fingerprint,
                    fingerprint
                )));
            }
            if r.vectors.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.vectors.len(),
                });
            }
            for v in &r.vectors {
                if v.len() != s {
                    return Err(Error::LengthMismatch { left: v.len(), right: s });
                }
                words.extend_from_slice(v.words());
            }
        }
        Ok((Packed { words, per_attr, d }, mechanism))
    }

    #[inline]
    fn attr(&self, record: usize, a: usize) -> &[u64] {
        let start = (record * self.d + a) * self.per_attr;
        &self.words[start..start + self.per_attr]
    }
}

fn estimators(schema: &Schema, mechanism: Mechanism) -> Vec<Estimator> {
    schema
        .attribute_configs()
        .iter()
        .map(|c| Estimator::new(c, mechanism))
        .collect()
}

/// Combines per-attribute distance estimates into one Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// `sqrt(Σ clamp(raw_i, 0, 2t)²)`: every attribute clamped to its local view.
    #[default]
    Clamped,
    /// `sqrt(Σ max(0, raw_i)²)`, without the upper clamp. With one attribute the
    /// signed raw estimate is returned instead, which keeps averages unbiased.
    Raw,
}

/// Pairwise distances between encoded records under one schema.
pub fn build_distance_matrix(encoded: &[EncodedRecord], schema: &Schema) -> Result<DistanceMatrix> {
    build_distance_matrix_with(encoded, schema, Combine::Clamped)
}

pub fn build_distance_matrix_with(
    encoded: &[EncodedRecord],
    schema: &Schema,
    combine: Combine,
) -> Result<DistanceMatrix> {
    let (packed, mechanism) = Packed::new(encoded, schema)?;
    let est = estimators(schema, mechanism);
    let n = encoded.len();
    let d = packed.d;
    let signed = combine == Combine::Raw && d == 1;
    let rows = upper_rows(n, |i| {
        ((i + 1)..n)
            .map(|j| {
                if signed {
                    return est[0].raw(xor_popcount(packed.attr(i, 0), packed.attr(j, 0)));
                }
                let mut sum = 0.0;
                for (a, e) in est.iter().enumerate() {
                    let h = xor_popcount(packed.attr(i, a), packed.attr(j, a));
                    let v = match combine {
                        Combine::Clamped => e.clamped(h),
                        Combine::Raw => e.raw(h).max(0.0),
                    };
                    sum += v * v;
                }
                libm::sqrt(sum)
            })
            .collect()
    });
    let mut m = DistanceMatrix::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m.values[i * n + j] = v;
            m.values[j * n + i] = v;
        }
    }
    Ok(m)
}

/// Pairwise Hamming distances for single-attribute encodings.
pub fn build_hamming_matrix(encoded: &[EncodedRecord], schema: &Schema) -> Result<HammingMatrix> {
    if schema.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: schema.dimension(),
        });
    }
    let (packed, _) = Packed::new(encoded, schema)?;
    let n = encoded.len();
    let rows = upper_rows(n, |i| {
        ((i + 1)..n)
            .map(|j| xor_popcount(packed.attr(i, 0), packed.attr(j, 0)))
            .collect()
    });
    let mut values = vec![0u32; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(HammingMatrix { n, values })
}

/// Mean absolute difference over the strict upper triangle.
pub fn average_estimation_error(truth: &DistanceMatrix, estimate: &DistanceMatrix) -> Result<f64> {
    let n = truth.n();
    average_estimation_error_over(
        truth,
        estimate,
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j))),
    )
}

/// Mean absolute difference over the given pairs.
pub fn average_estimation_error_over(
    truth: &DistanceMatrix,
    estimate: &DistanceMatrix,
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<f64> {
    if truth.n() != estimate.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            found: estimate.n(),
        });
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (i, j) in pairs {
        if i >= truth.n() || j >= truth.n() {
            return Err(Error::param("pair index out of range"));
        }
        total += libm::fabs(truth.get(i, j) - estimate.get(i, j));
        count += 1;
    }
    if count == 0 {
        return Err(Error::param("no pairs to compare"));
    }
    Ok(total / count as f64)
}
