use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{ClusterAssignment, KClusterResult};
use crate::error::{Error, Result};
use crate::rng::{derive_stream, INIT};

/// Lloyd's algorithm with k-means++ seeding, on raw coordinates. Only usable
/// where the points themselves are available, as for the perturbation
/// baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansOptions {
    pub fn new(k: usize) -> Self {
        KMeansOptions {
            k,
            max_iterations: 300,
            restarts: 10,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let v = sq(p, center);
        if v < best.1 {
            best = (c, v);
        }
    }
    best
}

fn seed_centers<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iterations: usize) -> KClusterResult {
    let (n, k, dim) = (points.len(), centers.len(), points[0].len());
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=max_iterations {
        iterations = iter;
        let mut inertia = 0.0;
        let mut changed = false;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let (c, v) = nearest(p, &centers);
            inertia += v;
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster with the worst-served point.
                let far = (0..n)
                    .max_by(|&a, &b| sq(&points[a], &centers[labels[a]]).total_cmp(&sq(&points[b], &centers[labels[b]])))
                    .expect("non-empty");
                centers[c] = points[far].clone();
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KClusterResult {
        assignment: ClusterAssignment {
            labels: labels.iter().map(|&c| c as i64).collect(),
            k,
            iterations,
            converged,
        },
        objective: *trace.last().expect("at least one iteration"),
        objective_trace: trace,
    }
}

pub fn kmeans(points: &[Vec<f64>], options: &KMeansOptions) -> Result<KClusterResult> {
    let n = points.len();
    if options.k == 0 || options.k > n {
        return Err(Error::param(alloc::format!("k must lie in [1, {n}], got {}", options.k)));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::param("points have differing dimensions"));
    }
    let mut best: Option<KClusterResult> = None;
    for r in 0..options.restarts.max(1) {
        let mut rng = derive_stream(options.seed, INIT, r as u64);
        let centers = seed_centers(points, options.k, &mut rng);
        let result = lloyd(points, centers, options.max_iterations.max(1));
        if best.as_ref().is_none_or(|b| result.objective < b.objective) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
