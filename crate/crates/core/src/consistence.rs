//! Repairs saturated distance estimates by chaining trusted local-view hops.
//!
//! Estimates of pairs more than `2t` apart saturate near `2t`. For collinear
//! points inside the local view, estimated distances are additive, so a
//! saturated entry can be replaced by the sum of two trusted entries through an
//! intermediate point. Revisions proceed in rounds: an entry revised in round
//! `k` only serves as an addend from round `k + 1` on.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::{EncodingConfig, Mechanism};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::privacy::error_bound;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistenceOptions {
    /// Slack allowed in the additivity test `D_ij + D_jk ≈ D_ik`.
    pub tolerance: f64,
    /// Largest distance trusted as-is. When absent it is inferred from the
    /// matrix, since the aggregator does not know `t`.
    pub known_local_radius: Option<f64>,
    /// Cap on revision rounds; defaults to `n`.
    pub max_rounds: Option<usize>,
}

impl ConsistenceOptions {
    pub fn new(tolerance: f64) -> Self {
        ConsistenceOptions {
            tolerance,
            known_local_radius: None,
            max_rounds: None,
        }
    }

    /// Tolerance set to the estimation error bound at `β = 0.05`.
    pub fn for_config(config: &EncodingConfig, mechanism: Mechanism) -> Self {
        let tolerance = error_bound(config, mechanism, 0.05).expect("0.05 is a valid beta");
        ConsistenceOptions::new(tolerance)
    }

    pub fn with_known_local_radius(mut self, r: f64) -> Self {
        self.known_local_radius = Some(r);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistenceReport {
    /// Refined matrix; its revision entries record the round of each rewrite.
    pub matrix: DistanceMatrix,
    /// Local-view radius, supplied or inferred. `None` when no additive triple
    /// was found and the matrix was returned unchanged.
    pub radius: Option<f64>,
    /// Entries at or below this value were copied unchanged.
    pub cutoff: Option<f64>,
    pub rounds: usize,
    pub revised: usize,
    /// Entries above the cutoff that no chain reached; they keep their values.
    pub unresolved: usize,
}

/// Largest `D_ik` that is the sum of two non-trivial legs `D_ij + D_jk`
/// within `tol`.
fn infer_radius(m: &DistanceMatrix, tol: f64) -> Option<f64> {
    let n = m.n();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |k| (i, k)))
        .collect();
    pairs.sort_by(|a, b| m.get(b.0, b.1).total_cmp(&m.get(a.0, a.1)));
    let leg = 2.0 * tol;
    for (i, k) in pairs {
        let dik = m.get(i, k);
        if dik <= leg {
            break;
        }
        let witnessed = (0..n).any(|j| {
            if j == i || j == k {
                return false;
            }
            let (dij, djk) = (m.get(i, j), m.get(j, k));
            dij > leg && djk > leg && libm::fabs(dij + djk - dik) <= tol
        });
        if witnessed {
            return Some(dik);
        }
    }
    None
}

/// Runs the consistence pass over a symmetric, non-negative matrix.
///
/// Without a known radius, `r` is the largest entry witnessed as a sum of two
/// legs, and entries up to `r - 3·tolerance` are trusted; the margin keeps
/// noisy saturated entries that happen to pass the additivity test out of the
/// trusted set. When several intermediaries can revise an entry in the same
/// round, the smallest sum wins.
pub fn distance_consistence(m: &DistanceMatrix, options: &ConsistenceOptions) -> Result<ConsistenceReport> {
    let tol = options.tolerance;
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::param("tolerance must be finite and non-negative"));
    }
    let n = m.n();
    let (radius, cutoff) = match options.known_local_radius {
        Some(r) if !(r.is_finite() && r >= 0.0) => {
            return Err(Error::param("local radius must be finite and non-negative"))
        }
        Some(r) => (r, r),
        None => match infer_radius(m, tol) {
            Some(r) => (r, r - 3.0 * tol),
            None => {
                return Ok(ConsistenceReport {
                    matrix: m.clone(),
                    radius: None,
                    cutoff: None,
                    rounds: 0,
                    revised: 0,
                    unresolved: 0,
                })
            }
        },
    };

    // 0 = unresolved, k + 1 = resolved in round k.
    let mut resolved = vec![0u32; n * n];
    for i in 0..n {
        for k in 0..n {
            if i == k || m.get(i, k) <= cutoff {
                resolved[i * n + k] = 1;
            }
        }
    }
    let mut out = m.clone();
    let max_rounds = options.max_rounds.unwrap_or(n).max(1);
    let mut rounds = 0;
    let mut revised = 0;
    for round in 1..=max_rounds {
        let mut updates = Vec::new();
        for i in 0..n {
            for k in (i + 1)..n {
                if resolved[i * n + k] != 0 {
                    continue;
                }
                let mut best = f64::INFINITY;
                for j in 0..n {
                    let (a, b) = (resolved[i * n + j], resolved[j * n + k]);
                    if a != 0 && b != 0 && (a as usize) <= round && (b as usize) <= round {
                        let cand = out.get(i, j) + out.get(j, k);
                        if cand < best {
                            best = cand;
                        }
                    }
                }
                if best.is_finite() {
                    updates.push((i, k, best));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        rounds = round;
        revised += updates.len();
        for (i, k, v) in updates {
            out.set_revised(i, k, v, round as u32);
            resolved[i * n + k] = round as u32 + 1;
            resolved[k * n + i] = round as u32 + 1;
        }
    }
    let unresolved = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |k| (i, k)))
        .filter(|(i, k)| resolved[i * n + k] == 0)
        .count();
    Ok(ConsistenceReport {
        matrix: out,
        radius: Some(radius),
        cutoff: Some(cutoff),
        rounds,
        revised,
        unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Schema;
    use crate::dataset::Record;
    use crate::distance::build_distance_matrix;
    use crate::encoder::Encoder;
    use alloc::vec;

    fn matrix(n: usize, entries: &[(usize, usize, f64)]) -> DistanceMatrix {
        let mut v = vec![0.0; n * n];
        for &(i, j, d) in entries {
            v[i * n + j] = d;
            v[j * n + i] = d;
        }
        DistanceMatrix::from_values(n, v).unwrap()
    }

    #[test]
    fn saturated_chain_is_repaired_with_known_radius() {
        let m = matrix(3, &[(0, 1, 2.0), (1, 2, 2.0), (0, 2, 2.16)]);
        let opts = ConsistenceOptions::new(0.1).with_known_local_radius(2.0);
        let r = distance_consistence(&m, &opts).unwrap();
        assert_eq!(r.matrix.get(0, 2), 4.0);
        assert_eq!(r.matrix.get(2, 0), 4.0);
        assert_eq!(r.matrix.revision(0, 2), 1);
        assert_eq!(r.matrix.revision(0, 1), 0);
        assert_eq!(r.matrix.get(0, 1), 2.0);
        assert_eq!((r.rounds, r.revised, r.unresolved), (1, 1, 0));
    }

    #[test]
    fn revisions_only_build_on_earlier_rounds() {
        // Points 0..4 on a line, one unit apart, trusted up to 1.
        let mut e = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                e.push((i, j, if j - i == 1 { 1.0 } else { 1.5 }));
            }
        }
        let m = matrix(5, &e);
        let r = distance_consistence(&m, &ConsistenceOptions::new(0.0).with_known_local_radius(1.0)).unwrap();
        assert_eq!(r.matrix.get(0, 2), 2.0);
        assert_eq!(r.matrix.revision(0, 2), 1);
        // 0..3 needs a round-1 addend, so it lands in round 2.
        assert_eq!(r.matrix.get(0, 3), 3.0);
        assert_eq!(r.matrix.revision(0, 3), 2);
        assert_eq!(r.matrix.get(0, 4), 4.0);
        assert_eq!(r.matrix.revision(0, 4), 2);
        assert_eq!(r.rounds, 2);
    }

    #[test]
    fn unreachable_entries_keep_their_values() {
        let m = matrix(4, &[(0, 1, 1.0), (2, 3, 1.0), (0, 2, 5.0), (0, 3, 5.0), (1, 2, 5.0), (1, 3, 5.0)]);
        let r = distance_consistence(&m, &ConsistenceOptions::new(0.0).with_known_local_radius(1.0)).unwrap();
        assert_eq!(r.matrix, m);
        assert_eq!(r.unresolved, 4);
    }

    #[test]
    fn collinear_noiseless_points_are_unchanged() {
        let base = EncodingConfig::new(0.0, 10.0, 10.0, 4000, 1.0, 2).unwrap();
        let enc = Encoder::new(Schema::uniform(base, 1).unwrap(), Mechanism::Bv).unwrap();
        let recs: Vec<Record> = [1.0, 4.0, 8.5].iter().enumerate().map(|(i, x)| Record::new(i as u64, vec![*x])).collect();
        let m = build_distance_matrix(&enc.encode_all(&recs, 0).unwrap(), enc.schema()).unwrap();
        let r = distance_consistence(&m, &ConsistenceOptions::for_config(&base, Mechanism::Bv)).unwrap();
        for (a, b) in r.matrix.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn no_witness_returns_input() {
        let m = matrix(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let r = distance_consistence(&m, &ConsistenceOptions::new(0.01)).unwrap();
        assert_eq!(r.radius, None);
        assert_eq!(r.matrix, m);
    }

    #[test]
    fn rejects_negative_tolerance() {
        let m = DistanceMatrix::zeros(2);
        assert!(distance_consistence(&m, &ConsistenceOptions::new(-1.0)).is_err());
    }
}
