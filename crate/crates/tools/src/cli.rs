//! The `dpbv` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dpbv_core::cluster::{dbscan, kcluster, nmi, ClusterAssignment, DbscanOptions, KClusterOptions};
use dpbv_core::consistence::{distance_consistence, ConsistenceOptions};
use dpbv_core::distance::{build_distance_matrix_with, Combine, DistanceMatrix};
use dpbv_core::multiparty::VerticalMethod;
use dpbv_core::privacy::{delta_of, error_bound, expected_popcount, output_distribution, s_of};
use dpbv_core::rng::derive_seed;
use dpbv_core::{derive_hash_family, EncodingConfig, Encoder, Mechanism, RangePolicy, Schema};
use log::info;
use serde_json::json;

use crate::config::{AttributeSpec, ConfigFile};
use crate::data::Table;
use crate::encoded::EncodedDataset;
use crate::experiments::{self, Settings, VerticalRegime};
use crate::manifest::RunManifest;
use crate::simulate::{custodians, simulate, SimParams, Task};
use crate::{datasets, matrix};

#[derive(Debug, Parser)]
#[command(name = "dpbv", version, about = "Distance-preserving private bit-vector encodings")]
pub struct Cli {
    /// Directory for outputs whose path is not given.
    #[arg(long, global = true, env = "DPBV_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Bv,
    Dpbv,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Bv => Mechanism::Bv,
            MechanismArg::Dpbv => Mechanism::Dpbv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CombineArg {
    Clamped,
    Raw,
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Self {
        match c {
            CombineArg::Clamped => Combine::Clamped,
            CombineArg::Raw => Combine::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Kcluster,
    Dbscan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Bv,
    Dpbv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Naive,
    Decomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Fig4,
    Fig5,
    Fig6,
    Table3,
    EpsilonSweep,
    Visualization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Binary,
    Jsonl,
}

/// Where input rows come from.
#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// CSV path, or one of: digits, blobs, circles, moons.
    #[arg(long)]
    pub data: String,
    /// Rows for generated datasets.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Min-max scale every column onto its configured range first.
    #[arg(long)]
    pub normalize: bool,
    /// Keep only the first N rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a shared encoding configuration.
    Config {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        lower: f64,
        #[arg(long, default_value_t = 50.0)]
        upper: f64,
        #[arg(long, default_value_t = 25.0)]
        t: f64,
        #[arg(long, default_value_t = 1000)]
        s: usize,
        #[arg(long, default_value_t = 2.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        attributes: usize,
        /// Take attribute names and ranges from a CSV file's columns.
        #[arg(long)]
        from_data: Option<PathBuf>,
    },
    /// Encode a dataset into bit vectors.
    Encode {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = MechanismArg::Dpbv)]
        mechanism: MechanismArg,
        /// Seed of this custodian's private noise. Drawn at random if absent.
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Clamp out-of-range values instead of rejecting the dataset.
        #[arg(long)]
        clamp: bool,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate pairwise distances from encoded records.
    Distances {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        encoded: PathBuf,
        #[arg(long, value_enum, default_value_t = CombineArg::Clamped)]
        combine: CombineArg,
        /// `.csv` for dense CSV, anything else for binary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repair saturated distance estimates.
    Consistence {
        #[arg(long)]
        matrix: PathBuf,
        /// Supplies the default tolerance.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MechanismArg::Dpbv)]
        mechanism: MechanismArg,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        known_radius: Option<f64>,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-entry revision rounds; defaults to `<out>.revisions.csv`.
        #[arg(long)]
        revisions: Option<PathBuf>,
    },
    /// Privacy and accuracy figures for given parameters.
    Privacy {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0, 4.0])]
        epsilon: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1000usize])]
        s: Vec<usize>,
        /// Report the bits needed for this δ instead of δ for given s.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        lower: f64,
        #[arg(long, default_value_t = 50.0)]
        upper: f64,
        #[arg(long, default_value_t = 25.0)]
        t: f64,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the exact output distribution of this input (small s only).
        #[arg(long)]
        distribution_x: Option<f64>,
        #[arg(long, default_value_t = 8)]
        distribution_s: usize,
        #[arg(long)]
        distribution_out: Option<PathBuf>,
    },
    /// Cluster records from exact or estimated distances.
    Cluster {
        #[arg(long, value_enum, default_value_t = Algo::Kcluster)]
        algo: Algo,
        /// Raw data; encoded first unless `--mode exact`.
        #[arg(long)]
        data: Option<String>,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        limit: Option<usize>,
        /// Precomputed distance matrix instead of data.
        #[arg(long, conflicts_with = "data")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long, value_enum)]
        combine: Option<CombineArg>,
        #[arg(long)]
        consistence: bool,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5.0)]
        eps: f64,
        #[arg(long, default_value_t = 5)]
        min_pts: usize,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Labels CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics JSON; defaults to `<out>.metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run custodians and an aggregator in one process.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        parties: usize,
        #[arg(long, value_enum, default_value_t = PartitionArg::Horizontal)]
        partition: PartitionArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Naive)]
        method: MethodArg,
        /// Bits per decomposition scalar (default: s × the party's attributes).
        #[arg(long)]
        dec_bits: Option<usize>,
        #[arg(long, value_enum, default_value_t = MechanismArg::Dpbv)]
        mechanism: MechanismArg,
        #[arg(long, value_enum)]
        algo: Option<Algo>,
        #[arg(long, value_enum, default_value_t = CombineArg::Clamped)]
        combine: CombineArg,
        #[arg(long)]
        consistence: bool,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5.0)]
        eps: f64,
        #[arg(long, default_value_t = 5)]
        min_pts: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Derives every party's noise seed. Drawn at random if absent.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Metrics JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Regenerate an experiment's series as CSV (series,x,y,stderr).
    Reproduce {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        replicates: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 1000)]
        s: usize,
    },
    /// Re-run the command recorded in a manifest.
    Rerun { manifest: PathBuf },
}

/// Run-time state shared by the subcommands.
struct Ctx {
    out_dir: PathBuf,
    /// Arguments as recorded in manifests, with any drawn seeds appended.
    args: Vec<String>,
    started: Instant,
}

impl Ctx {
    fn output(&self, given: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
        let p = match given {
            Some(p) => p.clone(),
            None => {
                fs::create_dir_all(&self.out_dir)
                    .with_context(|| format!("creating output directory {}", self.out_dir.display()))?;
                self.out_dir.join(default)
            }
        };
        Ok(p)
    }

    fn seed_or_draw(&mut self, given: Option<u64>, flag: &str) -> u64 {
        given.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            self.args.push(format!("--{flag}"));
            self.args.push(s.to_string());
            s
        })
    }

    fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.args.clone())
    }

    fn finish(&self, mut m: RunManifest, outputs: Vec<PathBuf>) -> Result<()> {
        // Seeds drawn after the manifest was started are in `self.args`.
        m.args = self.args.clone();
        m.duration_seconds = self.started.elapsed().as_secs_f64();
        let primary = outputs.first().context("no outputs")?.clone();
        m.outputs = outputs;
        let path = RunManifest::path_for(&primary);
        m.save(&path)?;
        info!("wrote {} and its manifest", primary.display());
        Ok(())
    }
}

pub fn load_table(spec: &str, n: usize, seed: u64) -> Result<Table> {
    let path = Path::new(spec);
    if path.exists() {
        Table::load(path)
    } else {
        datasets::by_name(spec, n, seed)
    }
}

/// Applies `--limit` and `--normalize` (onto each attribute's range).
fn prepare(mut t: Table, schema: Option<&Schema>, normalize: bool, limit: Option<usize>) -> Result<Table> {
    if let Some(n) = limit {
        t = t.head(n);
    }
    if normalize {
        let schema = schema.context("--normalize needs a configuration")?;
        ensure!(schema.dimension() == t.dimension(), "dataset and configuration disagree on the attribute count");
        t.normalize(0.0, 1.0);
        for row in &mut t.rows {
            for (v, a) in row.iter_mut().zip(schema.attributes()) {
                *v = a.lower + *v * (a.upper - a.lower);
            }
        }
    }
    Ok(t)
}

fn write_labels(path: &Path, ids: &[u64], labels: &[i64], truth: Option<&[i64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    match truth {
        Some(_) => w.write_record(["id", "cluster", "label"])?,
        None => w.write_record(["id", "cluster"])?,
    }
    for (i, (id, c)) in ids.iter().zip(labels).enumerate() {
        let mut rec = vec![id.to_string(), c.to_string()];
        if let Some(t) = truth {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if cli.out_dir.is_some() && !args.iter().any(|a| a == "--out-dir" || a.starts_with("--out-dir=")) {
        args.push("--out-dir".into());
        args.push(out_dir.display().to_string());
    }
    run_with(cli, Ctx { out_dir, args, started: Instant::now() })
}

/// Runs a parsed command with explicit recorded arguments (used by tests and
/// `rerun`).
pub fn run_args<I: IntoIterator<Item = String>>(args: I) -> Result<()> {
    let args: Vec<String> = args.into_iter().collect();
    let cli = Cli::try_parse_from(std::iter::once("dpbv".to_string()).chain(args.iter().cloned()))?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    run_with(cli, Ctx { out_dir, args, started: Instant::now() })
}

fn run_with(cli: Cli, mut ctx: Ctx) -> Result<()> {
    match cli.command {
        Command::Config { out, lower, upper, t, s, epsilon, seed, attributes, from_data } => {
            let mut cfg = ConfigFile { lower, upper, t, s, epsilon, seed, attributes: Vec::new(), attribute_count: Some(attributes) };
            let mut m = ctx.manifest("config");
            if let Some(path) = &from_data {
                let table = Table::load(path)?;
                let mut ranges = table.clone();
                cfg.attributes = ranges
                    .normalize(0.0, 1.0)
                    .into_iter()
                    .zip(&table.names)
                    .map(|((lo, hi), name)| AttributeSpec { name: name.clone(), lower: lo, upper: hi.max(lo) })
                    .collect();
                cfg.attribute_count = None;
                m.inputs.push(path.clone());
            }
            let schema = cfg.to_schema()?;
            let out = ctx.output(&out, "config.json")?;
            cfg.save(&out)?;
            m.fingerprint = Some(schema.fingerprint().to_string());
            m.seeds.insert("config".into(), seed);
            ctx.finish(m, vec![out])
        }

        Command::Encode { config, data, mechanism, noise_seed, clamp, format, out } => {
            let schema = crate::config::load_schema(&config)?;
            let noise_seed = ctx.seed_or_draw(noise_seed, "noise-seed");
            let table = prepare(load_table(&data.data, data.n, data.data_seed)?, Some(&schema), data.normalize, data.limit)?;
            let policy = if clamp { RangePolicy::Clamp } else { RangePolicy::Reject };
            let dataset = table.to_dataset(&schema, policy)?;
            let mech: Mechanism = mechanism.into();
            let records = Encoder::new(schema.clone(), mech)?.encode_all(&dataset.records, noise_seed)?;
            let ds = EncodedDataset::new(mech, schema.fingerprint(), schema.base().s(), schema.dimension(), records)?;
            let jsonl = match format {
                Some(f) => f == FormatArg::Jsonl,
                None => out.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "jsonl"),
            };
            let out = ctx.output(&out, if jsonl { "encoded.jsonl" } else { "encoded.bin" })?;
            if jsonl {
                let f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
                ds.write_jsonl(std::io::BufWriter::new(f))?;
            } else {
                ds.save(&out)?;
            }
            info!("encoded {} records with {} attributes", ds.records.len(), ds.d);
            let mut m = ctx.manifest("encode");
            m.fingerprint = Some(schema.fingerprint().to_string());
            m.seeds.insert("config".into(), schema.base().seed());
            m.seeds.insert("noise".into(), noise_seed);
            m.inputs = vec![config, PathBuf::from(&data.data)];
            m.parameter("mechanism", mech.as_str());
            m.parameter("records", ds.records.len());
            ctx.finish(m, vec![out])
        }

        Command::Distances { config, encoded, combine, out } => {
            let schema = crate::config::load_schema(&config)?;
            let ds = load_encoded(&encoded)?;
            let matrix = build_distance_matrix_with(&ds.records, &schema, combine.into())?;
            let out = ctx.output(&out, "distances.csv")?;
            matrix::save(&matrix, &out)?;
            let mut m = ctx.manifest("distances");
            m.fingerprint = Some(schema.fingerprint().to_string());
            m.inputs = vec![config, encoded];
            m.parameter("n", matrix.n());
            ctx.finish(m, vec![out])
        }

        Command::Consistence { matrix: input, config, mechanism, tolerance, known_radius, max_rounds, out, revisions } => {
            let d = matrix::load(&input)?;
            let mut opts = match (tolerance, &config) {
                (Some(tol), _) => ConsistenceOptions::new(tol),
                (None, Some(c)) => ConsistenceOptions::for_config(crate::config::load_schema(c)?.base(), mechanism.into()),
                (None, None) => bail!("give --tolerance or --config"),
            };
            if let Some(r) = known_radius {
                opts = opts.with_known_local_radius(r);
            }
            if let Some(r) = max_rounds {
                opts.max_rounds = Some(r);
            }
            let report = distance_consistence(&d, &opts)?;
            let out = ctx.output(&out, "consistence.csv")?;
            matrix::save(&report.matrix, &out)?;
            let rev = revisions.unwrap_or_else(|| {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".revisions.csv");
                out.with_file_name(name)
            });
            let f = fs::File::create(&rev).with_context(|| format!("creating {}", rev.display()))?;
            matrix::write_revisions_csv(&report.matrix, std::io::BufWriter::new(f))?;
            println!(
                "radius {}  cutoff {}  rounds {}  revised {}  unresolved {}",
                report.radius.map_or("-".into(), |r| format!("{r:.4}")),
                report.cutoff.map_or("-".into(), |r| format!("{r:.4}")),
                report.rounds,
                report.revised,
                report.unresolved
            );
            let mut m = ctx.manifest("consistence");
            m.inputs.push(input);
            m.inputs.extend(config);
            m.parameter("tolerance", opts.tolerance);
            m.parameter("rounds", report.rounds);
            ctx.finish(m, vec![out, rev])
        }

        Command::Privacy { epsilon, s, delta, lower, upper, t, beta, out, distribution_x, distribution_s, distribution_out } => {
            let mut rows = Vec::new();
            for &eps in &epsilon {
                let sizes = match delta {
                    Some(d) => vec![s_of(eps, d)?],
                    None => s.clone(),
                };
                for &bits in &sizes {
                    let config = EncodingConfig::new(lower, upper, t, bits, eps, 0)?;
                    let ln_delta = delta_of(eps, bits);
                    let w = expected_popcount(&config, Mechanism::Dpbv);
                    let bound = error_bound(&config, Mechanism::Dpbv, beta)?;
                    rows.push((eps, bits, ln_delta, w, bound));
                }
            }
            println!("{:>8} {:>8} {:>12} {:>10} {:>10}", "epsilon", "s", "delta", "E[w]", "bound");
            for (eps, bits, ln_delta, w, bound) in &rows {
                println!("{:>8} {:>8} {:>12} {:>10.2} {:>10.4}", eps, bits, format_delta(*ln_delta), w, bound);
            }
            let mut outputs = Vec::new();
            if let Some(path) = &out {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["epsilon", "s", "ln_delta", "delta", "expected_popcount", "error_bound"])?;
                for (eps, bits, ln_delta, pop, bound) in &rows {
                    w.write_record([
                        eps.to_string(),
                        bits.to_string(),
                        ln_delta.to_string(),
                        format_delta(*ln_delta),
                        pop.to_string(),
                        bound.to_string(),
                    ])?;
                }
                w.flush()?;
                outputs.push(path.clone());
            }
            if let Some(x) = distribution_x {
                let eps = *epsilon.first().context("no epsilon")?;
                let config = EncodingConfig::new(lower, upper, t, distribution_s, eps, 0)?;
                let family = derive_hash_family(&config, 0)?;
                let probs = output_distribution(x, &family, &config)?;
                let path = ctx.output(&distribution_out, "distribution.csv")?;
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["output", "probability"])?;
                for (o, p) in probs.iter().enumerate() {
                    w.write_record([format!("{o:0width$b}", width = distribution_s), p.to_string()])?;
                }
                w.flush()?;
                outputs.push(path);
            }
            if outputs.is_empty() {
                return Ok(());
            }
            let mut m = ctx.manifest("privacy");
            m.parameter("beta", beta);
            ctx.finish(m, outputs)
        }

        Command::Cluster {
            algo, data, n, data_seed, normalize, limit, matrix: matrix_in, config, mode, noise_seed, combine, consistence,
            k, eps, min_pts, max_iter, restarts, seed, out, metrics,
        } => {
            let schema = config.as_deref().map(crate::config::load_schema).transpose()?;
            let mut m = ctx.manifest("cluster");
            let combine = combine.map(Combine::from).unwrap_or(match algo {
                Algo::Kcluster => Combine::Raw,
                Algo::Dbscan => Combine::Clamped,
            });
            let (ids, truth, d) = match (&data, &matrix_in) {
                (_, Some(path)) => {
                    m.inputs.push(path.clone());
                    let d = matrix::load(path)?;
                    ((0..d.n() as u64).collect::<Vec<_>>(), None, d)
                }
                (Some(spec), None) => {
                    m.inputs.push(PathBuf::from(spec));
                    let table = prepare(load_table(spec, n, data_seed)?, schema.as_ref(), normalize, limit)?;
                    let d = match mode {
                        Mode::Exact => DistanceMatrix::euclidean(&table.rows),
                        Mode::Bv | Mode::Dpbv => {
                            let schema = schema.as_ref().context("--mode bv/dpbv needs --config")?;
                            let mech = if mode == Mode::Bv { Mechanism::Bv } else { Mechanism::Dpbv };
                            let noise = ctx.seed_or_draw(noise_seed, "noise-seed");
                            m.seeds.insert("noise".into(), noise);
                            m.fingerprint = Some(schema.fingerprint().to_string());
                            let ds = table.to_dataset(schema, RangePolicy::Reject)?;
                            let enc = Encoder::new(schema.clone(), mech)?.encode_all(&ds.records, noise)?;
                            build_distance_matrix_with(&enc, schema, combine)?
                        }
                    };
                    (table.ids.clone(), table.labels.clone(), d)
                }
                (None, None) => bail!("give --data or --matrix"),
            };
            let d = if consistence {
                let schema = schema.as_ref().context("--consistence needs --config")?;
                let mech = if mode == Mode::Bv { Mechanism::Bv } else { Mechanism::Dpbv };
                distance_consistence(&d, &ConsistenceOptions::for_config(schema.base(), mech))?.matrix
            } else {
                d
            };
            let (assignment, objective): (ClusterAssignment, Option<f64>) = match algo {
                Algo::Kcluster => {
                    let opts = KClusterOptions::new(k).with_seed(seed).with_restarts(restarts).with_max_iterations(max_iter);
                    let r = kcluster(&d, &opts)?;
                    (r.assignment, Some(r.objective))
                }
                Algo::Dbscan => (dbscan(&d, &DbscanOptions { eps, min_points: min_pts })?, None),
            };
            let score = truth.as_deref().map(|t| nmi(t, &assignment.labels)).transpose()?;
            let out = ctx.output(&out, "labels.csv")?;
            write_labels(&out, &ids, &assignment.labels, truth.as_deref())?;
            let metrics_path = metrics.unwrap_or_else(|| {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".metrics.json");
                out.with_file_name(name)
            });
            write_json(
                &metrics_path,
                &json!({
                    "nmi": score,
                    "clusters": assignment.k,
                    "iterations": assignment.iterations,
                    "converged": assignment.converged,
                    "objective": objective,
                    "n": d.n(),
                }),
            )?;
            m.seeds.insert("cluster".into(), seed);
            m.parameter("algo", format!("{algo:?}").to_lowercase());
            m.parameter("mode", format!("{mode:?}").to_lowercase());
            ctx.finish(m, vec![out, metrics_path])
        }

        Command::Simulate {
            data, config, parties, partition, method, dec_bits, mechanism, algo, combine, consistence, k, eps, min_pts,
            restarts, seed, master_seed, out, matrix_out,
        } => {
            let schema = crate::config::load_schema(&config)?;
            let master = ctx.seed_or_draw(master_seed, "master-seed");
            let table = prepare(load_table(&data.data, data.n, data.data_seed)?, Some(&schema), data.normalize, data.limit)?;
            let parts = custodians(&table, &schema, parties, partition == PartitionArg::Vertical, master)?;
            let task = match algo {
                None => Task::Distances,
                Some(Algo::Kcluster) => Task::KCluster(KClusterOptions::new(k).with_seed(seed).with_restarts(restarts)),
                Some(Algo::Dbscan) => Task::Dbscan(DbscanOptions { eps, min_points: min_pts }),
            };
            let mut params = SimParams::new(mechanism.into(), task);
            params.method = match method {
                MethodArg::Naive => VerticalMethod::Naive,
                MethodArg::Decomposition => VerticalMethod::Decomposition,
            };
            params.combine = combine.into();
            params.consistence = consistence;
            params.dec_bits = dec_bits;
            let outcome = simulate(&parts, &schema, &params)?;
            let truth_matrix = DistanceMatrix::euclidean(&table_in_id_order(&table, &outcome.ids)?);
            let error = dpbv_core::distance::average_estimation_error(&truth_matrix, &outcome.matrix).ok();
            let out = ctx.output(&out, "simulate.json")?;
            write_json(
                &out,
                &json!({
                    "parties": parties,
                    "partition": format!("{partition:?}").to_lowercase(),
                    "method": format!("{method:?}").to_lowercase(),
                    "records": outcome.ids.len(),
                    "bytes_received": outcome.bytes_received,
                    "mean_abs_error": error,
                    "nmi": outcome.nmi,
                    "iterations": outcome.assignment.as_ref().map(|a| a.iterations),
                    "converged": outcome.assignment.as_ref().map(|a| a.converged),
                }),
            )?;
            let mut outputs = vec![out];
            if let Some(path) = matrix_out {
                matrix::save(&outcome.matrix, &path)?;
                outputs.push(path);
            }
            let mut m = ctx.manifest("simulate");
            m.fingerprint = Some(schema.fingerprint().to_string());
            m.seeds.insert("master".into(), master);
            for p in &parts {
                m.seeds.insert(format!("party{}", p.id), derive_seed(master, dpbv_core::rng::PARTY, p.id));
            }
            m.inputs = vec![config, PathBuf::from(&data.data)];
            ctx.finish(m, outputs)
        }

        Command::Reproduce { experiment, out, seed, replicates, restarts, s } => {
            let settings = Settings { seed, replicates, restarts };
            let rows = match experiment {
                Experiment::Fig4 => experiments::fig4(&[250, 500, 1000, 2000], &settings)?,
                Experiment::Fig5 => {
                    let dims = [2, 4, 8, 16, 32];
                    let mut rows = experiments::horizontal_sweep(&dims, &VerticalRegime { s, ..VerticalRegime::saturating() }, &settings)?;
                    for (tag, regime) in [("saturating", VerticalRegime::saturating()), ("full_view", VerticalRegime::full_view())] {
                        for mut r in experiments::vertical_sweep(&dims, &VerticalRegime { s, ..regime }, &settings)? {
                            r.series = format!("{}_{tag}", r.series);
                            rows.push(r);
                        }
                    }
                    rows
                }
                Experiment::Fig6 => experiments::fig6(
                    &[0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
                    &[1e-10, 1e-30, 1e-56, 1e-100],
                )?,
                Experiment::Table3 => experiments::table3(s, &settings)?,
                Experiment::EpsilonSweep => experiments::epsilon_sweep(&[0.25, 0.5, 1.0, 2.0, 4.0], s, &settings)?,
                Experiment::Visualization => experiments::visualization(300, s, 2.0, &settings)?,
            };
            let name = experiment.to_possible_value().context("experiment name")?.get_name().replace('-', "_");
            let out = ctx.output(&out, &format!("{name}.csv"))?;
            let f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            experiments::write_rows(&rows, std::io::BufWriter::new(f))?;
            let mut m = ctx.manifest("reproduce");
            m.seeds.insert("experiment".into(), seed);
            m.parameter("experiment", &name);
            m.parameter("settings", settings);
            ctx.finish(m, vec![out])
        }

        Command::Rerun { manifest } => {
            let m = RunManifest::load(&manifest)?;
            ensure!(m.tool == env!("CARGO_PKG_NAME"), "manifest was written by {}", m.tool);
            if m.version != env!("CARGO_PKG_VERSION") {
                log::warn!("manifest was written by version {}, this is {}", m.version, env!("CARGO_PKG_VERSION"));
            }
            run_args(m.args)
        }
    }
}

/// Rows of `table` reordered to match `ids`.
fn table_in_id_order(table: &Table, ids: &[u64]) -> Result<Vec<Vec<f64>>> {
    let index: std::collections::HashMap<u64, usize> = table.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    ids.iter()
        .map(|id| index.get(id).map(|&i| table.rows[i].clone()).context("unknown record id"))
        .collect()
}

fn load_encoded(path: &Path) -> Result<EncodedDataset> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        EncodedDataset::read_jsonl(std::io::BufReader::new(f))
    } else {
        EncodedDataset::load(path)
    }
}

/// `ln δ` as a decimal with a mantissa, e.g. `7.51e-56`; works far below
/// the smallest `f64`.
pub fn format_delta(ln_delta: f64) -> String {
    if ln_delta == f64::NEG_INFINITY {
        return "0".into();
    }
    let log10 = ln_delta / std::f64::consts::LN_10;
    let mut exp = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exp);
    if (mantissa * 100.0).round() >= 1000.0 {
        mantissa /= 10.0;
        exp += 1.0;
    }
    format!("{mantissa:.2}e{exp}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_formatting() {
        assert_eq!(format_delta(delta_of(2.0, 1000)), "7.51e-56");
        assert_eq!(format_delta(delta_of(1.0, 1000)), "8.96e-137");
        assert_eq!(format_delta(f64::NEG_INFINITY), "0");
        assert_eq!(format_delta(0.0), "1.00e0");
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
