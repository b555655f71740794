use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{ClusterAssignment, NOISE};
use crate::distance::{Dissimilarity, Estimator, HammingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanOptions {
    /// Neighbourhood radius in distance units.
    pub eps: f64,
    /// Neighbours (the point itself included) needed for a core point.
    pub min_points: usize,
}

fn run(n: usize, min_points: usize, neighbours: impl Fn(usize, &mut Vec<usize>)) -> ClusterAssignment {
    const UNSEEN: i64 = i64::MIN;
    let mut labels = vec![UNSEEN; n];
    let mut k = 0i64;
    let mut buf = Vec::new();
    let mut queue = VecDeque::new();
    for p in 0..n {
        if labels[p] != UNSEEN {
            continue;
        }
        neighbours(p, &mut buf);
        if buf.len() < min_points {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = k;
        queue.extend(buf.iter().copied());
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = k;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = k;
            neighbours(q, &mut buf);
            if buf.len() >= min_points {
                queue.extend(buf.iter().copied());
            }
        }
        k += 1;
    }
    ClusterAssignment {
        labels,
        k: k as usize,
        iterations: 1,
        converged: true,
    }
}

fn check_min_points(min_points: usize) -> Result<()> {
    if min_points == 0 {
        return Err(Error::param("min_points must be at least 1"));
    }
    Ok(())
}

/// Density clustering with neighbourhoods `{q : d(p, q) ≤ eps}`.
pub fn dbscan<D: Dissimilarity + ?Sized>(d: &D, options: &DbscanOptions) -> Result<ClusterAssignment> {
    check_min_points(options.min_points)?;
    if !(options.eps.is_finite() && options.eps >= 0.0) {
        return Err(Error::param("eps must be finite and non-negative"));
    }
    let n = d.len();
    Ok(run(n, options.min_points, |p, out| {
        out.clear();
        out.extend((0..n).filter(|&q| d.get(p, q) <= options.eps));
    }))
}

/// Density clustering on Hamming distances of single-attribute encodings.
/// `eps` is converted to the expected Hamming distance at that radius, so it
/// must lie inside the local view `[0, 2t]`.
pub fn dbscan_hamming(h: &HammingMatrix, estimator: &Estimator, options: &DbscanOptions) -> Result<ClusterAssignment> {
    check_min_points(options.min_points)?;
    let threshold = estimator.hamming_threshold(options.eps)?;
    let n = h.n();
    Ok(run(n, options.min_points, |p, out| {
        out.clear();
        out.extend((0..n).filter(|&q| h.get(p, q) as f64 <= threshold));
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::nmi;
    use crate::config::{EncodingConfig, Mechanism, Schema};
    use crate::dataset::Record;
    use crate::distance::{build_distance_matrix, build_hamming_matrix, DistanceMatrix};
    use crate::encoder::Encoder;

    fn line(points: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_fn(points.len(), |i, j| libm::fabs(points[i] - points[j]))
    }

    #[test]
    fn blobs_and_noise() {
        let mut xs = Vec::new();
        for i in 0..10 {
            xs.push(2.0 + 0.1 * i as f64);
            xs.push(20.0 + 0.1 * i as f64);
        }
        xs.push(11.0);
        xs.push(35.0);
        let r = dbscan(&line(&xs), &DbscanOptions { eps: 0.5, min_points: 3 }).unwrap();
        assert_eq!(r.k, 2);
        assert_eq!(r.labels[20], NOISE);
        assert_eq!(r.labels[21], NOISE);
        assert!((0..10).all(|i| r.labels[2 * i] == r.labels[0]));
        assert!((0..10).all(|i| r.labels[2 * i + 1] == r.labels[1]));
        assert_ne!(r.labels[0], r.labels[1]);
    }

    #[test]
    fn border_points_join_a_cluster() {
        let xs = [0.0, 0.1, 0.2, 0.7];
        let r = dbscan(&line(&xs), &DbscanOptions { eps: 0.5, min_points: 3 }).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0, 0]);
        assert!(dbscan(&line(&xs), &DbscanOptions { eps: 0.5, min_points: 0 }).is_err());
    }

    #[test]
    fn threshold_mode_matches_matrix_mode() {
        let base = EncodingConfig::new(0.0, 50.0, 10.0, 512, 2.0, 5).unwrap();
        let enc = Encoder::new(Schema::uniform(base, 1).unwrap(), Mechanism::Bv).unwrap();
        let xs: Vec<Record> = (0..40)
            .map(|i| Record::new(i, vec![if i < 20 { 5.0 + 0.2 * i as f64 } else { 40.0 + 0.2 * i as f64 - 4.0 }]))
            .collect();
        let e = enc.encode_all(&xs, 0).unwrap();
        let h = build_hamming_matrix(&e, enc.schema()).unwrap();
        let m = build_distance_matrix(&e, enc.schema()).unwrap();
        let est = Estimator::new(&base, Mechanism::Bv);
        // mu = 70, s = 512: eps = 2.5 maps to a Hamming threshold of 36.57..., between integers.
        let opts = DbscanOptions { eps: 2.5, min_points: 4 };
        let a = dbscan(&m, &opts).unwrap();
        let b = dbscan_hamming(&h, &est, &opts).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(nmi(&a.labels, &b.labels).unwrap() > 0.999);
        assert!(dbscan_hamming(&h, &est, &DbscanOptions { eps: 21.0, min_points: 4 }).is_err());
    }
}
