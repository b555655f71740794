//! Bundled and synthetic datasets.

use std::f64::consts::PI;

use anyhow::Result;
use dpbv_core::rng::derive_stream;
use rand_distr::{Distribution, Normal};

use crate::data::Table;

const DIGITS_CSV: &str = include_str!("../data/digits.csv");

/// The 1797 8×8 handwritten digits (UCI optical recognition of handwritten
/// digits, test split), as 64 pixel intensities in `0..=16` plus the digit.
pub fn digits() -> Result<Table> {
    Table::read_csv(DIGITS_CSV.as_bytes())
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

/// Isotropic Gaussian blobs; point `i` belongs to center `i % centers.len()`.
pub fn blobs(n: usize, centers: &[Vec<f64>], std: f64, seed: u64) -> Result<Table> {
    let d = centers.first().map_or(0, Vec::len);
    let noise = Normal::new(0.0, std)?;
    let mut rng = derive_stream(seed, "blobs", 0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % centers.len();
        rows.push(centers[c].iter().map(|x| x + noise.sample(&mut rng)).collect());
        labels.push(c as i64);
    }
    Ok(Table::new(names(d), rows, Some(labels)))
}

/// A large circle around a smaller one scaled by `factor`.
pub fn circles(n: usize, factor: f64, noise: f64, seed: u64) -> Result<Table> {
    let jitter = Normal::new(0.0, noise)?;
    let mut rng = derive_stream(seed, "circles", 0);
    let outer = n - n / 2;
    let inner = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (count, radius, label) in [(outer, 1.0, 0), (inner, factor, 1)] {
        for k in 0..count {
            let a = 2.0 * PI * k as f64 / count as f64;
            rows.push(vec![
                radius * a.cos() + jitter.sample(&mut rng),
                radius * a.sin() + jitter.sample(&mut rng),
            ]);
            labels.push(label);
        }
    }
    Ok(Table::new(names(2), rows, Some(labels)))
}

/// Two interleaving half circles.
pub fn moons(n: usize, noise: f64, seed: u64) -> Result<Table> {
    let jitter = Normal::new(0.0, noise)?;
    let mut rng = derive_stream(seed, "moons", 0);
    let outer = n - n / 2;
    let inner = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let frac = |k: usize, count: usize| if count > 1 { k as f64 / (count - 1) as f64 } else { 0.0 };
    for k in 0..outer {
        let a = PI * frac(k, outer);
        rows.push(vec![a.cos() + jitter.sample(&mut rng), a.sin() + jitter.sample(&mut rng)]);
        labels.push(0);
    }
    for k in 0..inner {
        let a = PI * frac(k, inner);
        rows.push(vec![
            1.0 - a.cos() + jitter.sample(&mut rng),
            0.5 - a.sin() + jitter.sample(&mut rng),
        ]);
        labels.push(1);
    }
    Ok(Table::new(names(2), rows, Some(labels)))
}

/// Uniform values on `[lo, hi]`, one attribute, no labels.
pub fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Table {
    use rand::Rng;
    let mut rng = derive_stream(seed, "uniform", 0);
    let rows = (0..n).map(|_| vec![rng.random_range(lo..=hi)]).collect();
    Table::new(names(1), rows, None)
}

/// A named generator with the parameters used by the experiments.
pub fn by_name(name: &str, n: usize, seed: u64) -> Result<Table> {
    match name {
        "digits" => digits(),
        "blobs" => blobs(n, &[vec![-5.0, -5.0], vec![5.0, 5.0], vec![-5.0, 5.0]], 1.0, seed),
        "circles" => circles(n, 0.4, 0.05, seed),
        "moons" => moons(n, 0.05, seed),
        other => anyhow::bail!(
            "unknown dataset `{other}`; available: digits, blobs, circles, moons (or pass a CSV path)"
        ),
    }
}
