use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use super::ClusterAssignment;
use crate::distance::Dissimilarity;
use crate::error::{Error, Result};
use crate::rng::{derive_stream, INIT};

/// Mean dissimilarity between point `p` and the members of a cluster. The
/// mean of raw estimates stays unbiased, so callers should pass unclamped
/// values.
pub fn point_to_cluster_distance<D: Dissimilarity + ?Sized>(p: usize, members: &[usize], d: &D) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    Ok(members.iter().map(|&q| d.get(p, q)).sum::<f64>() / members.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KClusterOptions {
    pub k: usize,
    pub max_iterations: usize,
    /// Independent random initialisations; the run with the lowest objective
    /// is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl KClusterOptions {
    pub fn new(k: usize) -> Self {
        KClusterOptions {
            k,
            max_iterations: 100,
            restarts: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KClusterResult {
    pub assignment: ClusterAssignment,
    /// Final value of `Σ_p D_C(p, C(p))`.
    pub objective: f64,
    /// Objective after initialisation and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// `sums[p * k + c] = Σ_{q ∈ C_c} d(p, q)`.
fn cluster_sums<D: Dissimilarity + ?Sized>(d: &D, labels: &[usize], k: usize) -> Vec<f64> {
    let n = labels.len();
    let mut sums = vec![0.0; n * k];
    let row = |p: usize, out: &mut [f64]| {
        for (q, &c) in labels.iter().enumerate() {
            out[c] += d.get(p, q);
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sums.par_chunks_mut(k.max(1)).enumerate().for_each(|(p, out)| row(p, out));
    }
    #[cfg(not(feature = "parallel"))]
    for (p, out) in sums.chunks_mut(k.max(1)).enumerate() {
        row(p, out);
    }
    sums
}

fn sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut s = vec![0; k];
    for &c in labels {
        s[c] += 1;
    }
    s
}

fn objective(sums: &[f64], labels: &[usize], sizes: &[usize], k: usize) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(p, &c)| sums[p * k + c] / sizes[c] as f64)
        .sum()
}

/// Moves the point farthest from its own cluster into each empty cluster.
fn fill_empty<D: Dissimilarity + ?Sized>(d: &D, labels: &mut [usize], k: usize) {
    loop {
        let size = sizes(labels, k);
        let Some(empty) = size.iter().position(|s| *s == 0) else {
            return;
        };
        let sums = cluster_sums(d, labels, k);
        let mut best: Option<(usize, f64)> = None;
        for (p, &c) in labels.iter().enumerate() {
            if size[c] < 2 {
                continue;
            }
            let v = sums[p * k + c] / size[c] as f64;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((p, v));
            }
        }
        match best {
            Some((p, _)) => labels[p] = empty,
            None => return,
        }
    }
}

fn argmin_row(row: &[f64], size: &[usize]) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (c, (&s, &n)) in row.iter().zip(size).enumerate() {
        if n == 0 {
            continue;
        }
        let v = s / n as f64;
        if v < best_v {
            best_v = v;
            best = c;
        }
    }
    best
}

fn run<D: Dissimilarity + ?Sized>(d: &D, k: usize, max_iterations: usize, seed: u64, restart: u64) -> KClusterResult {
    let n = d.len();
    let mut rng = derive_stream(seed, INIT, restart);
    let seeds = sample(&mut rng, n, k).into_vec();
    let mut labels: Vec<usize> = (0..n)
        .map(|p| {
            let mut best = 0;
            for c in 1..k {
                if d.get(p, seeds[c]) < d.get(p, seeds[best]) {
                    best = c;
                }
            }
            best
        })
        .collect();
    fill_empty(d, &mut labels, k);

    let mut sums = cluster_sums(d, &labels, k);
    let mut size = sizes(&labels, k);
    let mut trace = vec![objective(&sums, &labels, &size, k)];
    let mut history = vec![labels.clone()];
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=max_iterations {
        iterations = iter;
        let mut next: Vec<usize> = (0..n).map(|p| argmin_row(&sums[p * k..(p + 1) * k], &size)).collect();
        fill_empty(d, &mut next, k);
        if next == labels {
            converged = true;
            break;
        }
        let cycled = history.contains(&next);
        labels = next;
        sums = cluster_sums(d, &labels, k);
        size = sizes(&labels, k);
        trace.push(objective(&sums, &labels, &size, k));
        if cycled {
            break;
        }
        history.push(labels.clone());
    }
    KClusterResult {
        assignment: ClusterAssignment {
            labels: labels.iter().map(|&c| c as i64).collect(),
            k,
            iterations,
            converged,
        },
        objective: *trace.last().expect("trace starts non-empty"),
        objective_trace: trace,
    }
}

/// Partitions points into `k` clusters using only pairwise dissimilarities.
///
/// Starts from `k` distinct random records, assigns every point to its
/// nearest seed, then repeatedly moves each point to the cluster with the
/// smallest mean dissimilarity to it, measured against the previous
/// iteration's clusters. Stops when assignments repeat, or after
/// `max_iterations`. Ties go to the lowest cluster index.
pub fn kcluster<D: Dissimilarity + ?Sized>(d: &D, options: &KClusterOptions) -> Result<KClusterResult> {
    let n = d.len();
    if options.k == 0 || options.k > n {
        return Err(Error::param(alloc::format!(
            "k must lie in [1, {n}], got {}",
            options.k
        )));
    }
    let mut best: Option<KClusterResult> = None;
    for r in 0..options.restarts.max(1) {
        let result = run(d, options.k, options.max_iterations, options.seed, r as u64);
        if best.as_ref().is_none_or(|b| result.objective < b.objective) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMatrix;
    use crate::rng::derive_stream;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut rng = derive_stream(seed, "blobs", 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let c = (i % 2) as i64;
                let center = if c == 0 { 5.0 } else { 45.0 };
                (vec![center + noise.sample(&mut rng)], c)
            })
            .unzip()
    }

    #[test]
    fn point_to_cluster_examples() {
        let m = DistanceMatrix::from_fn(3, |i, j| [[0.0, 2.0, 4.0], [2.0, 0.0, 0.0], [4.0, 0.0, 0.0]][i][j]);
        assert_eq!(point_to_cluster_distance(0, &[1], &m).unwrap(), 2.0);
        assert_eq!(point_to_cluster_distance(0, &[1, 2], &m).unwrap(), 3.0);
        assert_eq!(point_to_cluster_distance(1, &[1, 2], &m).unwrap(), 0.0);
        assert_eq!(point_to_cluster_distance(0, &[], &m), Err(Error::EmptyCluster));
    }

    #[test]
    fn single_cluster_converges_immediately() {
        let (x, _) = blobs(20, 1);
        let m = DistanceMatrix::euclidean(&x);
        let r = kcluster(&m, &KClusterOptions::new(1)).unwrap();
        assert!(r.assignment.labels.iter().all(|l| *l == 0));
        assert_eq!(r.assignment.iterations, 1);
        assert!(r.assignment.converged);
    }

    #[test]
    fn invalid_k_is_rejected() {
        let m = DistanceMatrix::zeros(3);
        assert!(kcluster(&m, &KClusterOptions::new(0)).is_err());
        assert!(kcluster(&m, &KClusterOptions::new(4)).is_err());
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (x, truth) = blobs(200, 2);
        let m = DistanceMatrix::euclidean(&x);
        for seed in 0..5 {
            let r = kcluster(&m, &KClusterOptions::new(2).with_seed(seed)).unwrap();
            assert_eq!(crate::cluster::nmi(&r.assignment.labels, &truth).unwrap(), 1.0);
            assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
    }

    #[test]
    fn deterministic_and_shift_invariant() {
        let (x, _) = blobs(60, 3);
        // Quarter-unit grid keeps every sum exact under the shift.
        let x: Vec<Vec<f64>> = x.iter().map(|v| vec![libm::round(v[0] * 4.0) / 4.0]).collect();
        let m = DistanceMatrix::from_fn(x.len(), |i, j| libm::fabs(x[i][0] - x[j][0]));
        let opts = KClusterOptions::new(3).with_seed(9);
        let a = kcluster(&m, &opts).unwrap();
        assert_eq!(a, kcluster(&m, &opts).unwrap());
        let shifted = kcluster(&m.shifted(8.0), &opts).unwrap();
        assert_eq!(a.assignment.labels, shifted.assignment.labels);
    }

    #[test]
    fn duplicate_points_do_not_leave_clusters_empty() {
        let m = DistanceMatrix::zeros(5);
        let r = kcluster(&m, &KClusterOptions::new(3)).unwrap();
        let mut seen = r.assignment.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }
}
