//! Experiment drivers. Each returns long-format rows `(series, x, y, stderr)`.

use std::io::Write;

use anyhow::{ensure, Result};
use dpbv_core::cluster::{
    adp_transform, dbscan, kcluster, kmeans, nmi, rsp_transform, DbscanOptions, KClusterOptions, KMeansOptions,
};
use dpbv_core::consistence::{distance_consistence, ConsistenceOptions};
use dpbv_core::distance::{average_estimation_error_over, build_distance_matrix_with, Combine, DistanceMatrix};
use dpbv_core::multiparty::{partial_squared_distance, vertical_estimate_naive, DecompositionConfig};
use dpbv_core::privacy::s_of;
use dpbv_core::rng::{derive_seed, derive_stream, NOISE, PERTURB};
use dpbv_core::{EncodingConfig, Encoder, Mechanism, Schema};
use rand::Rng;
use serde::Serialize;

use crate::data::Table;
use crate::datasets;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub stderr: f64,
}

impl Row {
    fn new(series: impl Into<String>, x: f64, samples: &[f64]) -> Self {
        let (y, stderr) = mean_stderr(samples);
        Row { series: series.into(), x, y, stderr }
    }
}

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_rows<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shared knobs for the drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub replicates: usize,
    /// kCluster / k-means restarts.
    pub restarts: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { seed: 0, replicates: 16, restarts: 10 }
    }
}

/// Error of saturated estimates before and after the consistence pass.
///
/// One replicate draws 200 uniform points on `[0, 25]`, encodes them with BV
/// at `t = 3` and measures the mean error over the 100 × 100 pairs between
/// the two halves.
pub fn fig4(s_values: &[usize], settings: &Settings) -> Result<Vec<Row>> {
    const N: usize = 200;
    let mut rows = Vec::new();
    for &s in s_values {
        let (mut raw, mut refined) = (Vec::new(), Vec::new());
        for rep in 0..settings.replicates {
            let seed = derive_seed(settings.seed, "fig4", rep as u64);
            let table = datasets::uniform(N, 0.0, 25.0, seed);
            let config = EncodingConfig::new(0.0, 25.0, 3.0, s, 1.0, seed)?;
            let schema = Schema::uniform(config, 1)?;
            let encoded = Encoder::new(schema.clone(), Mechanism::Bv)?.encode_all(&table.records(), seed)?;
            let est = build_distance_matrix_with(&encoded, &schema, Combine::Clamped)?;
            let truth = DistanceMatrix::euclidean(&table.rows);
            let opts = ConsistenceOptions::for_config(schema.base(), Mechanism::Bv);
            let fixed = distance_consistence(&est, &opts)?.matrix;
            let pairs = || (0..N / 2).flat_map(|i| (N / 2..N).map(move |j| (i, j)));
            raw.push(average_estimation_error_over(&truth, &est, pairs())?);
            refined.push(average_estimation_error_over(&truth, &fixed, pairs())?);
        }
        rows.push(Row::new("unrefined", s as f64, &raw));
        rows.push(Row::new("refined", s as f64, &refined));
    }
    Ok(rows)
}

/// Parameters of a vertical sweep: Alice and Bob each hold `d` attributes on
/// `[0, upper]`, Bob's are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerticalRegime {
    pub upper: f64,
    pub t: f64,
    pub s: usize,
    pub epsilon: f64,
    pub pairs: usize,
}

impl VerticalRegime {
    /// Per-attribute windows much narrower than the data, so naive per-attribute
    /// estimates saturate.
    pub fn saturating() -> Self {
        VerticalRegime { upper: 25.0, t: 3.0, s: 1000, epsilon: 2.0, pairs: 300 }
    }

    /// Windows covering the whole range.
    pub fn full_view() -> Self {
        VerticalRegime { upper: 50.0, t: 25.0, s: 1000, epsilon: 2.0, pairs: 300 }
    }
}

/// Mean absolute error of the full distance under the naive and the
/// decomposition estimators of Bob's part, per Bob dimension `d`.
///
/// Each pair gets fresh hash families. Decomposition uses `d·s` bits, the
/// same budget as the naive method.
pub fn vertical_sweep(dims: &[usize], regime: &VerticalRegime, settings: &Settings) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &d in dims {
        let mut data = derive_stream(settings.seed, "vertical-data", d as u64);
        let (mut naive, mut dec) = (Vec::new(), Vec::new());
        for k in 0..regime.pairs {
            let mut draw = || (0..2 * d).map(|_| data.random_range(0.0..=regime.upper)).collect::<Vec<f64>>();
            let (a, b) = (draw(), draw());
            let l2 = partial_squared_distance(&a[..d], &b[..d])?;
            let r2 = partial_squared_distance(&a[d..], &b[d..])?;
            let truth = (l2 + r2).sqrt();

            let seed = derive_seed(settings.seed, "vertical-pair", (d * 1_000_003 + k) as u64);
            let base = EncodingConfig::new(0.0, regime.upper, regime.t, regime.s, regime.epsilon, seed)?;
            let schema = Schema::uniform(base, d)?;
            let enc = Encoder::new(schema.clone(), Mechanism::Dpbv)?;
            let ra = dpbv_core::Record::new(0, a[d..].to_vec());
            let rb = dpbv_core::Record::new(1, b[d..].to_vec());
            let (ea, eb) = (enc.encode(&ra, seed)?, enc.encode(&rb, seed)?);
            let r2n = vertical_estimate_naive(&ea.vectors, &eb.vectors, &schema.attribute_configs(), Mechanism::Dpbv)?;
            naive.push(((l2 + r2n.max(0.0)).sqrt() - truth).abs());

            let dc = DecompositionConfig::new(&schema.attribute_configs(), d * regime.s, regime.epsilon, seed)?;
            let mut noise = derive_stream(seed, NOISE, 2);
            let (v1, v2) = dc.encode_pair(&a[d..], &b[d..], Mechanism::Dpbv, &mut noise)?;
            let r2d = dc.estimate(&v1, &v2, Mechanism::Dpbv)?;
            dec.push(((l2 + r2d.max(0.0)).sqrt() - truth).abs());
        }
        rows.push(Row::new("naive", d as f64, &naive));
        rows.push(Row::new("decomposition", d as f64, &dec));
    }
    Ok(rows)
}

/// Error of horizontally partitioned DPBV estimates as the dimension grows.
pub fn horizontal_sweep(dims: &[usize], regime: &VerticalRegime, settings: &Settings) -> Result<Vec<Row>> {
    const N: usize = 60;
    let mut rows = Vec::new();
    for &d in dims {
        let mut errs = Vec::new();
        for rep in 0..settings.replicates.max(1) {
            let seed = derive_seed(settings.seed, "horizontal", (d * 1000 + rep) as u64);
            let mut rng = derive_stream(seed, "data", 0);
            let pts: Vec<Vec<f64>> = (0..N).map(|_| (0..d).map(|_| rng.random_range(0.0..=regime.upper)).collect()).collect();
            let table = Table::new((0..d).map(|i| format!("x{i}")).collect(), pts, None);
            let base = EncodingConfig::new(0.0, regime.upper, regime.t, regime.s, regime.epsilon, seed)?;
            let schema = Schema::uniform(base, d)?;
            let encoded = Encoder::new(schema.clone(), Mechanism::Dpbv)?.encode_all(&table.records(), seed)?;
            let est = build_distance_matrix_with(&encoded, &schema, Combine::Clamped)?;
            let truth = DistanceMatrix::euclidean(&table.rows);
            errs.push(dpbv_core::distance::average_estimation_error(&truth, &est)?);
        }
        rows.push(Row::new("horizontal", d as f64, &errs));
    }
    Ok(rows)
}

/// Bits needed for a target δ as a function of ε.
pub fn fig6(epsilons: &[f64], deltas: &[f64]) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &delta in deltas {
        for &eps in epsilons {
            rows.push(Row {
                series: format!("delta={delta:e}"),
                x: eps,
                y: s_of(eps, delta)? as f64,
                stderr: 0.0,
            });
        }
    }
    Ok(rows)
}

/// Digits with every pixel column min-max scaled to `[0, 50]`.
pub fn scaled_digits() -> Result<Table> {
    let mut t = datasets::digits()?;
    t.normalize(0.0, 50.0);
    Ok(t)
}

/// The encoding used for digits: `t = 25` covers the whole scaled range.
pub fn digits_schema(d: usize, s: usize, epsilon: f64, seed: u64) -> Result<Schema> {
    Ok(Schema::uniform(EncodingConfig::new(0.0, 50.0, 25.0, s, epsilon, seed)?, d)?)
}

fn truth(table: &Table) -> Result<&[i64]> {
    table.labels.as_deref().ok_or_else(|| anyhow::anyhow!("dataset has no labels"))
}

/// kCluster NMI on exact Euclidean distances.
pub fn exact_kcluster(table: &Table, k: usize, settings: &Settings) -> Result<f64> {
    let d = DistanceMatrix::euclidean(&table.rows);
    let opts = KClusterOptions::new(k).with_restarts(settings.restarts).with_seed(settings.seed);
    Ok(nmi(truth(table)?, &kcluster(&d, &opts)?.assignment.labels)?)
}

/// Distance matrix from DPBV encodings of `table` under `schema`.
pub fn ldp_matrix(table: &Table, schema: &Schema, noise_seed: u64, combine: Combine) -> Result<DistanceMatrix> {
    let encoded = Encoder::new(schema.clone(), Mechanism::Dpbv)?.encode_all(&table.records(), noise_seed)?;
    Ok(build_distance_matrix_with(&encoded, schema, combine)?)
}

/// kCluster NMI on DPBV estimates at `epsilon`.
pub fn ldp_kcluster(table: &Table, k: usize, s: usize, epsilon: f64, settings: &Settings) -> Result<f64> {
    let schema = digits_schema(table.dimension(), s, epsilon, settings.seed)?;
    let m = ldp_matrix(table, &schema, derive_seed(settings.seed, NOISE, 0), Combine::Raw)?;
    let opts = KClusterOptions::new(k).with_restarts(settings.restarts).with_seed(settings.seed);
    Ok(nmi(truth(table)?, &kcluster(&m, &opts)?.assignment.labels)?)
}

/// Clustering utility on digits for every method in the comparison table.
/// `x` is the method's parameter (ε, σ or kept fraction), 0 if none.
pub fn table3(s: usize, settings: &Settings) -> Result<Vec<Row>> {
    let table = scaled_digits()?;
    let labels = truth(&table)?.to_vec();
    let k = 10;
    let km = KMeansOptions { restarts: settings.restarts, ..KMeansOptions::new(k).with_seed(settings.seed) };
    let mut rows = Vec::new();
    let mut push = |series: &str, x: f64, v: f64| rows.push(Row { series: series.into(), x, y: v, stderr: 0.0 });

    push("kmeans", 0.0, nmi(&labels, &kmeans(&table.rows, &km)?.assignment.labels)?);
    push("kcluster", 0.0, exact_kcluster(&table, k, settings)?);
    for eps in [1.0, 2.0] {
        push("ldp_kcluster", eps, ldp_kcluster(&table, k, s, eps, settings)?);
    }
    let mut rng = derive_stream(settings.seed, PERTURB, 0);
    for sigma in [1.0, 2.0] {
        // σ is in units of the original 0..16 pixel scale.
        let pts = adp_transform(&table.rows, sigma * 50.0 / 16.0, &mut rng)?;
        push("adp_kmeans", sigma, nmi(&labels, &kmeans(&pts, &km)?.assignment.labels)?);
    }
    for keep in [0.5, 0.75] {
        let q = (keep * table.dimension() as f64).round() as usize;
        let pts = rsp_transform(&table.rows, q, 1.0, &mut rng)?;
        push("rsp_kmeans", keep, nmi(&labels, &kmeans(&pts, &km)?.assignment.labels)?);
    }
    Ok(rows)
}

/// kCluster NMI on digits across privacy budgets, with the exact run as a
/// reference series.
pub fn epsilon_sweep(epsilons: &[f64], s: usize, settings: &Settings) -> Result<Vec<Row>> {
    let table = scaled_digits()?;
    let exact = exact_kcluster(&table, 10, settings)?;
    let mut rows = Vec::new();
    for &eps in epsilons {
        rows.push(Row { series: "exact".into(), x: eps, y: exact, stderr: 0.0 });
        rows.push(Row { series: "ldp_kcluster".into(), x: eps, y: ldp_kcluster(&table, 10, s, eps, settings)?, stderr: 0.0 });
    }
    Ok(rows)
}

/// Which algorithm a visualization run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VisualAlgo {
    KCluster(usize),
    Dbscan(DbscanOptions),
}

/// Labels from the exact and the DPBV (`t = 25`, `s`, `ε`) distances for a
/// 2-D dataset scaled to `[0, 50]`, and the NMI between them.
pub fn visual_agreement(table: &Table, algo: VisualAlgo, s: usize, epsilon: f64, settings: &Settings) -> Result<(Vec<i64>, Vec<i64>, f64)> {
    ensure!(table.dimension() == 2, "visualization datasets are two-dimensional");
    let mut t = table.clone();
    t.normalize(0.0, 50.0);
    let exact = DistanceMatrix::euclidean(&t.rows);
    let schema = digits_schema(2, s, epsilon, settings.seed)?;
    let noise = derive_seed(settings.seed, NOISE, 1);
    let (a, b) = match algo {
        VisualAlgo::KCluster(k) => {
            let opts = KClusterOptions::new(k).with_restarts(settings.restarts).with_seed(settings.seed);
            let est = ldp_matrix(&t, &schema, noise, Combine::Raw)?;
            (kcluster(&exact, &opts)?.assignment.labels, kcluster(&est, &opts)?.assignment.labels)
        }
        VisualAlgo::Dbscan(opts) => {
            let est = ldp_matrix(&t, &schema, noise, Combine::Clamped)?;
            (dbscan(&exact, &opts)?.labels, dbscan(&est, &opts)?.labels)
        }
    };
    let score = nmi(&a, &b)?;
    Ok((a, b, score))
}

/// DBSCAN parameters used for the visualization datasets (distance units of
/// the `[0, 50]` scale).
pub fn visual_dbscan() -> DbscanOptions {
    DbscanOptions { eps: 5.0, min_points: 5 }
}

/// Agreement between exact and private runs on blobs, circles and moons.
pub fn visualization(n: usize, s: usize, epsilon: f64, settings: &Settings) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (k, name) in ["blobs", "circles", "moons"].into_iter().enumerate() {
        let table = datasets::by_name(name, n, settings.seed)?;
        let (_, _, v) = visual_agreement(&table, VisualAlgo::Dbscan(visual_dbscan()), s, epsilon, settings)?;
        rows.push(Row { series: format!("{name}_dbscan"), x: k as f64, y: v, stderr: 0.0 });
        if name == "blobs" {
            let (_, _, v) = visual_agreement(&table, VisualAlgo::KCluster(3), s, epsilon, settings)?;
            rows.push(Row { series: "blobs_kcluster".into(), x: k as f64, y: v, stderr: 0.0 });
        }
    }
    Ok(rows)
}
