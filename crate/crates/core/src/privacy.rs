//! Privacy accounting for the randomized-response layer, plus exact analysis
//! of the output distribution for small `s`.
//!
//! Notation used throughout: `p = e^ε/(e^ε+1)` is the keep probability,
//! `q = 1 - p` the flip probability and `f = p - q = tanh(ε/2)`.

use alloc::vec::Vec;

use rand::Rng;

use crate::bitvec::BitVector;
use crate::config::{EncodingConfig, Mechanism};
use crate::encoder::{bv_encode, randomized_response};
use crate::error::{Error, Result};
use crate::hash::HashFamily;

/// Largest `s` for which the full output distribution is enumerated.
pub const MAX_ENUMERATION_BITS: usize = 20;

/// `e^ε/(e^ε+1)`, the probability that a bit survives.
pub fn keep_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-epsilon))
}

/// `1/(e^ε+1)`, the probability that a bit is flipped.
pub fn flip_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + libm::exp(epsilon))
}

/// `p - q = tanh(ε/2)`: how much of a bit's value survives on average.
pub fn correlation(epsilon: f64) -> f64 {
    libm::tanh(epsilon / 2.0)
}

fn ln_keep(epsilon: f64) -> f64 {
    -libm::log1p(libm::exp(-epsilon))
}

/// Natural log of `δ = p^s - e^ε q^s`, the additive slack of the whole
/// `s`-bit vector. Computed as `s·ln p + ln(1 - e^{ε(1-s)})`, which neither
/// underflows for large `s` nor cancels for small `s`. For `s = 1` the result
/// is `-∞` (a single bit is pure `ε`-LDP).
pub fn delta_of(epsilon: f64, s: usize) -> f64 {
    let s = s as f64;
    s * ln_keep(epsilon) + libm::log1p(-libm::exp(epsilon * (1.0 - s)))
}

/// Smallest `s` of the form `⌈ln δ / ln p⌉` for a target `δ ∈ (0, 1)`.
/// Since `δ(s) ≤ p^s`, the returned length always satisfies
/// `delta_of(ε, s) ≤ ln δ`.
pub fn s_of(epsilon: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta must lie in (0, 1)"));
    }
    s_of_log(epsilon, libm::log(delta))
}

/// [`s_of`] with the target given as `ln δ`, for targets below `f64::MIN_POSITIVE`.
pub fn s_of_log(epsilon: f64, ln_delta: f64) -> Result<usize> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param("epsilon must be positive"));
    }
    if ln_delta.is_nan() || ln_delta >= 0.0 || ln_delta.is_infinite() {
        return Err(Error::param("ln delta must be finite and negative"));
    }
    let s = libm::ceil(ln_delta / ln_keep(epsilon)).max(1.0);
    if s > u32::MAX as f64 {
        return Err(Error::param("required length exceeds 2^32 bits"));
    }
    let mut s = s as usize;
    while delta_of(epsilon, s) > ln_delta {
        s += 1;
    }
    Ok(s)
}

/// Expected popcount of an encoding. It does not depend on the input value.
pub fn expected_popcount(config: &EncodingConfig, mechanism: Mechanism) -> f64 {
    let s = config.s() as f64;
    let w = 2.0 * config.t() / config.mu();
    match mechanism {
        Mechanism::Bv => s * w,
        Mechanism::Dpbv => {
            let e = config.epsilon();
            s * (w * correlation(e) + flip_probability(e))
        }
    }
}

/// Half-width that contains the distance estimate with probability at least
/// `1 - β`, for pairs inside the local view. `f = 1` under plain BV.
pub fn error_bound(config: &EncodingConfig, mechanism: Mechanism, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta must lie in (0, 1)"));
    }
    let f = match mechanism {
        Mechanism::Bv => 1.0,
        Mechanism::Dpbv => correlation(config.epsilon()),
    };
    let spread = libm::sqrt(libm::log(2.0 / beta) / (2.0 * config.s() as f64));
    Ok(config.mu() / 2.0 / (f * f) * spread)
}

/// `ε`, `s`, the resulting `ln δ`, and the confidence parameter used for
/// error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub s: usize,
    pub ln_delta: f64,
    pub beta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, s: usize, beta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon must be positive"));
        }
        if s == 0 {
            return Err(Error::param("s must be at least 1"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::param("beta must lie in (0, 1)"));
        }
        Ok(PrivacyParams {
            epsilon,
            s,
            ln_delta: delta_of(epsilon, s),
            beta,
        })
    }

    /// Parameters with the shortest `s` meeting `delta`.
    pub fn for_delta(epsilon: f64, delta: f64, beta: f64) -> Result<Self> {
        PrivacyParams::new(epsilon, s_of(epsilon, delta)?, beta)
    }

    /// `δ` itself; underflows to 0 below `1e-308`.
    pub fn delta(&self) -> f64 {
        libm::exp(self.ln_delta)
    }

    pub fn log10_delta(&self) -> f64 {
        self.ln_delta / core::f64::consts::LN_10
    }
}

/// Probability of each of the `2^s` possible outputs for input `x`, indexed by
/// the output read as an integer with bit `i` at position `i`.
pub fn output_distribution(x: f64, family: &HashFamily, config: &EncodingConfig) -> Result<Vec<f64>> {
    let s = config.s();
    if s > MAX_ENUMERATION_BITS {
        return Err(Error::EnumerationTooLarge {
            s,
            limit: MAX_ENUMERATION_BITS,
        });
    }
    let code = code_of(&bv_encode(x, family, config)?);
    let powers = flip_powers(config.epsilon(), s);
    Ok((0..1u64 << s)
        .map(|o| powers[(o ^ code).count_ones() as usize])
        .collect())
}

fn code_of(v: &BitVector) -> u64 {
    v.words().first().copied().unwrap_or(0)
}

/// `p^(s-k) q^k` for `k = 0..=s`.
fn flip_powers(epsilon: f64, s: usize) -> Vec<f64> {
    let (p, q) = (keep_probability(epsilon), flip_probability(epsilon));
    (0..=s)
        .map(|k| libm::pow(p, (s - k) as f64) * libm::pow(q, k as f64))
        .collect()
}

/// Log-probabilities of `n` outputs sampled from the mechanism at `x`. Used in
/// place of [`output_distribution`] when `s` is too large to enumerate.
pub fn sample_output_log_probabilities<R: Rng + ?Sized>(
    x: f64,
    family: &HashFamily,
    config: &EncodingConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(BitVector, f64)>> {
    let bv = bv_encode(x, family, config)?;
    let (lp, lq) = (ln_keep(config.epsilon()), -libm::log1p(libm::exp(config.epsilon())));
    let s = config.s();
    (0..n)
        .map(|_| {
            let mut o = bv.clone();
            randomized_response(&mut o, config.epsilon(), rng);
            let k = o.hamming(&bv)? as usize;
            Ok((o, (s - k) as f64 * lp + k as f64 * lq))
        })
        .collect()
}

/// Log-likelihood `ln Pr[observed | x]` for every candidate `x` in `grid`.
pub fn posterior_over_inputs(
    observed: &BitVector,
    family: &HashFamily,
    config: &EncodingConfig,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let s = config.s();
    if observed.len() != s {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: s,
        });
    }
    let (lp, lq) = (ln_keep(config.epsilon()), -libm::log1p(libm::exp(config.epsilon())));
    grid.iter()
        .map(|&x| {
            let k = bv_encode(x, family, config)?.hamming(observed)? as usize;
            Ok((s - k) as f64 * lp + k as f64 * lq)
        })
        .collect()
}

/// `max_{A,B,o} Pr[o|A] - e^ε Pr[o|B]` over all pairs of `s`-bit codes and all
/// outputs. By XOR symmetry `A` is fixed to the zero code, leaving `4^s`
/// (B, o) pairs.
pub fn max_output_gap(epsilon: f64, s: usize) -> Result<f64> {
    const LIMIT: usize = 12;
    if s > LIMIT {
        return Err(Error::EnumerationTooLarge { s, limit: LIMIT });
    }
    let powers = flip_powers(epsilon, s);
    let e = libm::exp(epsilon);
    let mut best = f64::NEG_INFINITY;
    for b in 0u64..1 << s {
        for o in 0u64..1 << s {
            let gap = powers[o.count_ones() as usize] - e * powers[(o ^ b).count_ones() as usize];
            best = best.max(gap);
        }
    }
    Ok(best)
}

/// Same quantity as [`max_output_gap`] without the symmetry reduction, over
/// all `8^s` triples.
pub fn max_output_gap_exhaustive(epsilon: f64, s: usize) -> Result<f64> {
    const LIMIT: usize = 6;
    if s > LIMIT {
        return Err(Error::EnumerationTooLarge { s, limit: LIMIT });
    }
    let powers = flip_powers(epsilon, s);
    let e = libm::exp(epsilon);
    let mut best = f64::NEG_INFINITY;
    for a in 0u64..1 << s {
        for b in 0u64..1 << s {
            for o in 0u64..1 << s {
                let gap = powers[(o ^ a).count_ones() as usize]
                    - e * powers[(o ^ b).count_ones() as usize];
                best = best.max(gap);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::derive_hash_family;
    use crate::rng::derive_stream;
    use proptest::prelude::*;

    fn naive_delta(epsilon: f64, s: usize) -> f64 {
        let e = libm::exp(epsilon);
        libm::pow(e / (e + 1.0), s as f64) - e * libm::pow(1.0 / (e + 1.0), s as f64)
    }

    fn sci(ln_delta: f64) -> (f64, i32) {
        let l10 = ln_delta / core::f64::consts::LN_10;
        let exp = libm::floor(l10);
        (libm::pow(10.0, l10 - exp), exp as i32)
    }

    #[test]
    fn delta_matches_published_values() {
        let (m, e) = sci(delta_of(2.0, 1000));
        assert_eq!(e, -56);
        assert!((m - 7.5).abs() < 0.1, "{m}");
        let (m, e) = sci(delta_of(1.0, 1000));
        assert_eq!(e, -137);
        assert!((m - 8.9).abs() < 0.1, "{m}");
    }

    #[test]
    fn single_bit_is_pure() {
        for eps in [0.5, 1.0, 2.0, 4.0] {
            assert_eq!(libm::exp(delta_of(eps, 1)), 0.0);
        }
    }

    #[test]
    fn log_space_matches_naive_arithmetic() {
        for eps in [0.1, 0.5, 1.0, 2.0, 4.0] {
            for s in 2..=50 {
                let naive = naive_delta(eps, s);
                let fast = libm::exp(delta_of(eps, s));
                assert!((fast - naive).abs() <= 1e-12 * naive.abs().max(1e-300), "{eps} {s}");
            }
        }
    }

    #[test]
    fn s_of_inverts_delta_of() {
        let s = s_of(2.0, 7.5e-56).unwrap();
        assert!(s == 1000 || s == 1001, "{s}");
        assert!(delta_of(2.0, s) <= libm::log(7.5e-56));
        assert!(s_of(2.0, 0.0).is_err());
        assert!(s_of(2.0, 1.0).is_err());
    }

    #[test]
    fn s_of_monotonicity() {
        let mut last = 0;
        for k in 1..60 {
            let s = s_of_log(1.0, -(k as f64) * 5.0).unwrap();
            assert!(s >= last);
            last = s;
        }
        let mut last = 0;
        for eps in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let s = s_of(eps, 1e-20).unwrap();
            assert!(s > last, "{eps}: {s}");
            last = s;
        }
    }

    proptest! {
        #[test]
        fn s_of_meets_target(eps in 0.05f64..8.0, log10_delta in -200.0f64..-0.5) {
            let ln_delta = log10_delta * core::f64::consts::LN_10;
            let s = s_of_log(eps, ln_delta).unwrap();
            prop_assert!(delta_of(eps, s) <= ln_delta);
        }
    }

    #[test]
    fn expected_popcount_fixed_point_and_limit() {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 1000, 2.0, 0).unwrap();
        assert!((expected_popcount(&c, Mechanism::Dpbv) - 500.0).abs() < 1e-9);
        assert_eq!(expected_popcount(&c, Mechanism::Bv), 500.0);
        let narrow = EncodingConfig::new(0.0, 50.0, 5.0, 1000, 700.0, 0).unwrap();
        let bv = expected_popcount(&narrow, Mechanism::Bv);
        assert!((expected_popcount(&narrow, Mechanism::Dpbv) - bv).abs() < 1e-9);
    }

    #[test]
    fn error_bound_values() {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 1000, 2.0, 0).unwrap();
        let b = error_bound(&c, Mechanism::Dpbv, 0.05).unwrap();
        // Independent evaluation of (mu/2)((e^eps+1)/(e^eps-1))^2 sqrt(ln(2/beta)/(2s)).
        let e2 = libm::exp(2.0);
        let oracle = 50.0 * libm::pow((e2 + 1.0) / (e2 - 1.0), 2.0) * libm::sqrt(libm::log(40.0) / 2000.0);
        assert!((b - oracle).abs() < 1e-12);
        assert!((b - 3.70).abs() < 0.005, "{b}");
        assert!(error_bound(&c, Mechanism::Dpbv, 2.0).is_err());
        let c4 = c.with_s(4000).unwrap();
        let b4 = error_bound(&c4, Mechanism::Dpbv, 0.05).unwrap();
        assert!((b4 - b / 2.0).abs() < 1e-12);
    }

    fn small() -> (EncodingConfig, HashFamily) {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 10, 1.0, 3).unwrap();
        let f = derive_hash_family(&c, 0).unwrap();
        (c, f)
    }

    #[test]
    fn output_distribution_is_normalized_and_peaks_at_bv() {
        let (c, f) = small();
        let dist = output_distribution(24.3, &f, &c).unwrap();
        assert_eq!(dist.len(), 1024);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let code = code_of(&bv_encode(24.3, &f, &c).unwrap()) as usize;
        let argmax = (0..dist.len()).max_by(|a, b| dist[*a].total_cmp(&dist[*b])).unwrap();
        assert_eq!(argmax, code);
        assert!((dist[code] - libm::pow(keep_probability(1.0), 10.0)).abs() < 1e-15);
        let big = c.with_s(21).unwrap();
        let fam = derive_hash_family(&big, 0).unwrap();
        assert!(matches!(
            output_distribution(1.0, &fam, &big),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn per_output_ratio_is_bounded_by_code_distance() {
        let (c, f) = small();
        let a = output_distribution(24.3, &f, &c).unwrap();
        let b = output_distribution(26.2, &f, &c).unwrap();
        let dh = bv_encode(24.3, &f, &c)
            .unwrap()
            .hamming(&bv_encode(26.2, &f, &c).unwrap())
            .unwrap();
        let bound = libm::exp(c.epsilon() * dh as f64);
        let worst = a.iter().zip(&b).map(|(x, y)| x / y).fold(0.0, f64::max);
        assert!(worst <= bound * (1.0 + 1e-12), "{worst} > {bound}");
    }

    #[test]
    fn posterior_is_flat_over_identical_codes() {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 1000, 1.0, 3).unwrap();
        let f = derive_hash_family(&c, 0).unwrap();
        let observed = bv_encode(27.0, &f, &c).unwrap();
        let grid: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
        let ll = posterior_over_inputs(&observed, &f, &c, &grid).unwrap();
        let top = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(top, 1000.0 * ln_keep(1.0));
        let winners: Vec<f64> = grid.iter().zip(&ll).filter(|(_, l)| **l == top).map(|(x, _)| *x).collect();
        assert!(winners.contains(&27.0));
        let (lo, hi) = (ln_keep(1.0), -libm::log1p(libm::exp(1.0)));
        let lowest = ll.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(top - lowest <= 1000.0 * (lo - hi) + 1e-9);
    }

    #[test]
    fn sampled_outputs_have_consistent_log_probabilities() {
        let c = EncodingConfig::new(0.0, 50.0, 25.0, 64, 1.0, 3).unwrap();
        let f = derive_hash_family(&c, 0).unwrap();
        let samples = sample_output_log_probabilities(10.0, &f, &c, 20, &mut derive_stream(1, "s", 0)).unwrap();
        let grid = [10.0];
        for (o, lp) in samples {
            let ll = posterior_over_inputs(&o, &f, &c, &grid).unwrap();
            assert!((ll[0] - lp).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_slack_is_tight() {
        for eps in [0.5, 1.0, 2.0] {
            for s in 1..=6 {
                let a = max_output_gap(eps, s).unwrap();
                let b = max_output_gap_exhaustive(eps, s).unwrap();
                assert!((a - b).abs() < 1e-15);
                assert!((a - naive_delta(eps, s)).abs() < 1e-12, "{eps} {s}");
            }
        }
    }
}
