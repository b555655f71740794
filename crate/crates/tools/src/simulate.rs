//! In-process simulation of custodians and an aggregator.
//!
//! Custodians encode locally and hand the aggregator serialized payloads
//! only: encoded datasets, pair encodings for the decomposition estimator, and
//! (vertically) Alice's exact partial squared distances. Every payload is
//! round-tripped through its byte format, so the formats are the contract.

use std::collections::BTreeMap;

use anyhow::{bail, ensure, Context, Result};
use dpbv_core::cluster::{dbscan, kcluster, nmi, ClusterAssignment, DbscanOptions, KClusterOptions};
use dpbv_core::consistence::{distance_consistence, ConsistenceOptions};
use dpbv_core::distance::{build_distance_matrix_with, Combine, DistanceMatrix};
use dpbv_core::encoder::{bv_encode, dpbv_encode};
use dpbv_core::multiparty::{partial_squared_distance, vertical_estimate_naive, DecompositionConfig, VerticalMethod};
use dpbv_core::rng::{derive_seed, derive_stream, DECOMPOSITION, NOISE, PARTY};
use dpbv_core::{BitVector, EncodedRecord, Encoder, Mechanism, RangePolicy, Schema};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Table;
use crate::encoded::EncodedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Horizontal,
    /// Attribute columns `start..end` of the shared schema.
    Vertical { start: usize, end: usize },
}

/// Metadata sent alongside each payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyManifest {
    pub party: u64,
    pub partition: Partition,
    pub records: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct Payload {
    pub manifest: PartyManifest,
    pub bytes: Vec<u8>,
}

/// One data holder. `table` holds only this party's rows (horizontal) or
/// columns (vertical).
#[derive(Debug, Clone)]
pub struct Custodian {
    pub id: u64,
    pub partition: Partition,
    table: Table,
    schema: Schema,
    noise_seed: u64,
}

impl Custodian {
    /// The noise seed defaults to one derived from `master_seed` and the party id.
    pub fn new(id: u64, partition: Partition, table: Table, schema: Schema, master_seed: u64) -> Result<Self> {
        let cols = match partition {
            Partition::Horizontal => 0..schema.dimension(),
            Partition::Vertical { start, end } => {
                ensure!(start < end && end <= schema.dimension(), "invalid attribute range {start}..{end}");
                start..end
            }
        };
        ensure!(
            table.dimension() == cols.len(),
            "party {id} holds {} attributes, its partition needs {}",
            table.dimension(),
            cols.len()
        );
        for (row, id_) in table.rows.iter().zip(&table.ids) {
            for (v, a) in row.iter().zip(&schema.attributes()[cols.clone()]) {
                ensure!(
                    v.is_finite() && *v >= a.lower && *v <= a.upper,
                    "party {id}: record {id_} has a value outside the range of attribute `{}`",
                    a.name
                );
            }
        }
        Ok(Custodian {
            id,
            partition,
            table,
            schema,
            noise_seed: derive_seed(master_seed, PARTY, id),
        })
    }

    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    fn manifest(&self, records: usize) -> PartyManifest {
        PartyManifest {
            party: self.id,
            partition: self.partition,
            records,
            fingerprint: self.schema.fingerprint().to_string(),
        }
    }

    /// Encodes every record over this party's attributes.
    pub fn encoded_payload(&self, mechanism: Mechanism) -> Result<Payload> {
        let encoder = Encoder::new(self.schema.clone(), mechanism)?;
        let records = match self.partition {
            Partition::Horizontal => {
                let ds = self.table.to_dataset(&self.schema, RangePolicy::Reject)?;
                encoder.encode_all(&ds.records, self.noise_seed)?
            }
            Partition::Vertical { start, end } => {
                let configs = self.schema.attribute_configs();
                let families = &encoder.families()[start..end];
                let mut out = Vec::with_capacity(self.table.len());
                for (row, &id) in self.table.rows.iter().zip(&self.table.ids) {
                    let mut stream = derive_stream(self.noise_seed, NOISE, id);
                    let vectors = row
                        .iter()
                        .zip(families)
                        .zip(&configs[start..end])
                        .map(|((x, f), c)| match mechanism {
                            Mechanism::Bv => bv_encode(*x, f, c),
                            Mechanism::Dpbv => dpbv_encode(*x, f, c, &mut stream),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    out.push(EncodedRecord {
                        id,
                        mechanism,
                        fingerprint: self.schema.fingerprint(),
                        vectors,
                    });
                }
                out
            }
        };
        let d = match self.partition {
            Partition::Horizontal => self.schema.dimension(),
            Partition::Vertical { start, end } => end - start,
        };
        let ds = EncodedDataset::new(mechanism, self.schema.fingerprint(), self.schema.base().s(), d, records)?;
        Ok(Payload {
            manifest: self.manifest(ds.records.len()),
            bytes: ds.to_bytes(),
        })
    }

    /// Alice's exact `L²` for every pair of her records.
    pub fn partial_distance_payload(&self) -> Result<Payload> {
        ensure!(matches!(self.partition, Partition::Vertical { .. }), "partial distances need a vertical party");
        let n = self.table.len();
        let mut bytes = Vec::with_capacity(8 + 8 * n + 8 * n * n);
        bytes.extend_from_slice(&(n as u64).to_le_bytes());
        for id in &self.table.ids {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        for i in 0..n {
            for j in 0..n {
                let v = partial_squared_distance(&self.table.rows[i], &self.table.rows[j])?;
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(Payload {
            manifest: self.manifest(n),
            bytes,
        })
    }

    fn decomposition(&self, s_dec: usize) -> Result<DecompositionConfig> {
        let Partition::Vertical { start, end } = self.partition else {
            bail!("decomposition needs a vertical party");
        };
        let base = self.schema.base();
        let seed = derive_seed(base.seed(), DECOMPOSITION, start as u64);
        Ok(DecompositionConfig::new(&self.schema.attribute_configs()[start..end], s_dec, base.epsilon(), seed)?)
    }

    /// Pair encodings of `(S1, S2)` for rows `rows` against every later row.
    ///
    /// Layout: `"DPBP"`, `u32 s`, `u64 count`, then per pair `u64 id_a`,
    /// `u64 id_b` and the two packed vectors.
    pub fn decomposition_payload(&self, mechanism: Mechanism, s_dec: usize, rows: std::ops::Range<usize>) -> Result<Payload> {
        let dec = self.decomposition(s_dec)?;
        let n = self.table.len();
        let mut body = Vec::new();
        let mut count = 0u64;
        for i in rows {
            let id_a = self.table.ids[i];
            let pair_seed = derive_seed(self.noise_seed, NOISE, id_a);
            for j in (i + 1)..n {
                let id_b = self.table.ids[j];
                let mut stream = derive_stream(pair_seed, DECOMPOSITION, id_b);
                let (v1, v2) = dec.encode_pair(&self.table.rows[i], &self.table.rows[j], mechanism, &mut stream)?;
                body.extend_from_slice(&id_a.to_le_bytes());
                body.extend_from_slice(&id_b.to_le_bytes());
                v1.write_bytes(&mut body);
                v2.write_bytes(&mut body);
                count += 1;
            }
        }
        let mut bytes = Vec::with_capacity(16 + body.len());
        bytes.extend_from_slice(b"DPBP");
        bytes.extend_from_slice(&u32::try_from(s_dec)?.to_le_bytes());
        bytes.extend_from_slice(&count.to_le_bytes());
        bytes.extend_from_slice(&body);
        Ok(Payload {
            manifest: self.manifest(n),
            bytes,
        })
    }

    /// Ground truth, released only to the evaluation step.
    pub fn labels(&self) -> Option<Vec<(u64, i64)>> {
        let labels = self.table.labels.as_ref()?;
        Some(self.table.ids.iter().copied().zip(labels.iter().copied()).collect())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Consolidates payloads. It knows the shared schema but never sees values.
#[derive(Debug, Clone)]
pub struct Aggregator {
    schema: Schema,
    mechanism: Mechanism,
}

fn parse_partial(bytes: &[u8]) -> Result<(Vec<u64>, Vec<f64>)> {
    let take = |at: usize| -> Result<[u8; 8]> {
        bytes.get(at..at + 8).context("truncated partial-distance payload")?.try_into().map_err(Into::into)
    };
    let n = u64::from_le_bytes(take(0)?) as usize;
    let ids = (0..n).map(|i| Ok(u64::from_le_bytes(take(8 + 8 * i)?))).collect::<Result<Vec<_>>>()?;
    let base = 8 + 8 * n;
    ensure!(bytes.len() == base + 8 * n * n, "partial-distance payload has the wrong length");
    let values = (0..n * n).map(|k| Ok(f64::from_le_bytes(take(base + 8 * k)?))).collect::<Result<Vec<_>>>()?;
    Ok((ids, values))
}

impl Aggregator {
    pub fn new(schema: Schema, mechanism: Mechanism) -> Self {
        Aggregator { schema, mechanism }
    }

    fn check(&self, p: &Payload) -> Result<()> {
        let expected = self.schema.fingerprint().to_string();
        ensure!(
            p.manifest.fingerprint == expected,
            "party {} encoded under configuration {}, expected {expected}",
            p.manifest.party,
            p.manifest.fingerprint
        );
        Ok(())
    }

    fn decode(&self, p: &Payload) -> Result<EncodedDataset> {
        self.check(p)?;
        let ds = EncodedDataset::read_binary(p.bytes.as_slice())?;
        ensure!(ds.fingerprint == self.schema.fingerprint(), "payload header fingerprint mismatch");
        ensure!(ds.mechanism == self.mechanism, "party {} used mechanism {}", p.manifest.party, ds.mechanism);
        Ok(ds)
    }

    /// Union of horizontal payloads, ordered by record id.
    pub fn horizontal(&self, payloads: &[Payload], combine: Combine) -> Result<(Vec<u64>, DistanceMatrix)> {
        let mut records = Vec::new();
        for p in payloads {
            records.extend(self.decode(p)?.records);
        }
        records.sort_by_key(|r| r.id);
        ensure!(records.windows(2).all(|w| w[0].id != w[1].id), "duplicate record ids across parties");
        let ids = records.iter().map(|r| r.id).collect();
        Ok((ids, build_distance_matrix_with(&records, &self.schema, combine)?))
    }

    /// Alice's `L²` matrix reordered to ascending ids.
    pub fn partial_distances(&self, p: &Payload) -> Result<(Vec<u64>, DistanceMatrix)> {
        self.check(p)?;
        let (ids, values) = parse_partial(&p.bytes)?;
        let n = ids.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| ids[i]);
        let sorted: Vec<u64> = order.iter().map(|&i| ids[i]).collect();
        let m = DistanceMatrix::from_fn(n, |a, b| values[order[a] * n + order[b]]);
        Ok((sorted, m))
    }

    /// Adds per-attribute `R̂²` from a naive vertical payload into `acc`.
    pub fn accumulate_naive(&self, p: &Payload, ids: &[u64], acc: &mut DistanceMatrix) -> Result<()> {
        let Partition::Vertical { start, end } = p.manifest.partition else {
            bail!("naive estimation needs a vertical payload");
        };
        let ds = self.decode(p)?;
        let by_id: BTreeMap<u64, &EncodedRecord> = ds.records.iter().map(|r| (r.id, r)).collect();
        let rows: Vec<&EncodedRecord> = ids
            .iter()
            .map(|id| by_id.get(id).copied().with_context(|| format!("record {id} missing from party {}", p.manifest.party)))
            .collect::<Result<_>>()?;
        let configs = &self.schema.attribute_configs()[start..end];
        let n = ids.len();
        let add = DistanceMatrix::from_fn(n, |i, j| {
            vertical_estimate_naive(&rows[i].vectors, &rows[j].vectors, configs, self.mechanism).unwrap_or(f64::NAN)
        });
        ensure!(add.values().iter().all(|v| v.is_finite()), "malformed vectors in party {}", p.manifest.party);
        *acc = sum(acc, &add, 1.0);
        Ok(())
    }

    /// Adds decomposition `R̂²` estimates from one batch of pair encodings.
    pub fn accumulate_decomposition(&self, p: &Payload, ids: &[u64], s_dec: usize, acc: &mut [f64]) -> Result<()> {
        self.check(p)?;
        let Partition::Vertical { start, end } = p.manifest.partition else {
            bail!("decomposition needs a vertical payload");
        };
        let base = self.schema.base();
        let dec = DecompositionConfig::new(
            &self.schema.attribute_configs()[start..end],
            s_dec,
            base.epsilon(),
            derive_seed(base.seed(), DECOMPOSITION, start as u64),
        )?;
        let b = &p.bytes;
        ensure!(b.len() >= 16 && &b[0..4] == b"DPBP", "not a pair payload");
        let s = u32::from_le_bytes(b[4..8].try_into()?) as usize;
        ensure!(s == s_dec, "pair payload uses {s} bits, expected {s_dec}");
        let count = u64::from_le_bytes(b[8..16].try_into()?) as usize;
        let per = s.div_ceil(8);
        let stride = 16 + 2 * per;
        ensure!(b.len() == 16 + count * stride, "pair payload has the wrong length");
        let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let n = ids.len();
        for k in 0..count {
            let at = 16 + k * stride;
            let id_a = u64::from_le_bytes(b[at..at + 8].try_into()?);
            let id_b = u64::from_le_bytes(b[at + 8..at + 16].try_into()?);
            let v1 = BitVector::from_bytes(&b[at + 16..at + 16 + per], s)?;
            let v2 = BitVector::from_bytes(&b[at + 16 + per..at + stride], s)?;
            let (i, j) = (
                *index.get(&id_a).context("unknown record id in pair payload")?,
                *index.get(&id_b).context("unknown record id in pair payload")?,
            );
            let r2 = dec.estimate(&v1, &v2, self.mechanism)?;
            acc[i * n + j] += r2;
            acc[j * n + i] += r2;
        }
        Ok(())
    }
}

fn sum(a: &DistanceMatrix, b: &DistanceMatrix, scale: f64) -> DistanceMatrix {
    DistanceMatrix::from_fn(a.n(), |i, j| a.get(i, j) + scale * b.get(i, j))
}

/// What the aggregator does with the consolidated matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Distances,
    KCluster(KClusterOptions),
    Dbscan(DbscanOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub mechanism: Mechanism,
    pub method: VerticalMethod,
    pub combine: Combine,
    pub consistence: bool,
    pub task: Task,
    /// Bits per scalar encoding for the decomposition method; defaults to
    /// `s` times the party's attribute count.
    pub dec_bits: Option<usize>,
    /// Rows per decomposition batch.
    pub batch_rows: usize,
}

impl SimParams {
    pub fn new(mechanism: Mechanism, task: Task) -> Self {
        SimParams {
            mechanism,
            method: VerticalMethod::Naive,
            combine: Combine::Clamped,
            consistence: false,
            task,
            dec_bits: None,
            batch_rows: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub ids: Vec<u64>,
    pub matrix: DistanceMatrix,
    pub assignment: Option<ClusterAssignment>,
    pub nmi: Option<f64>,
    pub bytes_received: usize,
}

/// Runs the full pipeline over the given custodians.
pub fn simulate(parties: &[Custodian], schema: &Schema, params: &SimParams) -> Result<SimOutcome> {
    ensure!(!parties.is_empty(), "no parties");
    for p in parties {
        ensure!(p.schema.fingerprint() == schema.fingerprint(), "party {} disagrees on the configuration", p.id);
    }
    let agg = Aggregator::new(schema.clone(), params.mechanism);
    let horizontal = parties.iter().all(|p| p.partition == Partition::Horizontal);
    let vertical = parties.iter().all(|p| matches!(p.partition, Partition::Vertical { .. }));
    let mut bytes_received = 0;
    let (ids, mut matrix) = if horizontal {
        let payloads = parties.iter().map(|p| p.encoded_payload(params.mechanism)).collect::<Result<Vec<_>>>()?;
        bytes_received += payloads.iter().map(|p| p.bytes.len()).sum::<usize>();
        agg.horizontal(&payloads, params.combine)?
    } else if vertical {
        check_vertical_cover(parties, schema.dimension())?;
        let alice = &parties[0];
        let l2 = alice.partial_distance_payload()?;
        bytes_received += l2.bytes.len();
        let (ids, l2) = agg.partial_distances(&l2)?;
        let n = ids.len();
        let mut r2 = DistanceMatrix::zeros(n);
        for bob in &parties[1..] {
            ensure!(bob.len() == n, "party {} holds {} records, expected {n}", bob.id, bob.len());
            match params.method {
                VerticalMethod::Naive => {
                    let p = bob.encoded_payload(params.mechanism)?;
                    bytes_received += p.bytes.len();
                    agg.accumulate_naive(&p, &ids, &mut r2)?;
                }
                VerticalMethod::Decomposition => {
                    let Partition::Vertical { start, end } = bob.partition else { unreachable!() };
                    let s_dec = params.dec_bits.unwrap_or((end - start) * schema.base().s());
                    let mut acc = vec![0.0; n * n];
                    let step = params.batch_rows.max(1);
                    for lo in (0..n).step_by(step) {
                        let p = bob.decomposition_payload(params.mechanism, s_dec, lo..(lo + step).min(n))?;
                        bytes_received += p.bytes.len();
                        agg.accumulate_decomposition(&p, &ids, s_dec, &mut acc)?;
                    }
                    r2 = DistanceMatrix::from_fn(n, |i, j| r2.get(i, j) + acc[i * n + j]);
                }
            }
        }
        let m = DistanceMatrix::from_fn(n, |i, j| (l2.get(i, j).max(0.0) + r2.get(i, j).max(0.0)).sqrt());
        (ids, m)
    } else {
        bail!("parties mix horizontal and vertical partitions");
    };

    if params.consistence {
        let opts = ConsistenceOptions::for_config(schema.base(), params.mechanism);
        matrix = distance_consistence(&matrix, &opts)?.matrix;
    }
    let assignment = match params.task {
        Task::Distances => None,
        Task::KCluster(opts) => Some(kcluster(&matrix, &opts)?.assignment),
        Task::Dbscan(opts) => Some(dbscan(&matrix, &opts)?),
    };
    let nmi = match &assignment {
        Some(a) => evaluate(parties, &ids, &a.labels)?,
        None => None,
    };
    Ok(SimOutcome {
        ids,
        matrix,
        assignment,
        nmi,
        bytes_received,
    })
}

fn check_vertical_cover(parties: &[Custodian], d: usize) -> Result<()> {
    let mut ranges: Vec<(usize, usize)> = parties
        .iter()
        .map(|p| match p.partition {
            Partition::Vertical { start, end } => (start, end),
            Partition::Horizontal => unreachable!(),
        })
        .collect();
    ranges.sort();
    let mut next = 0;
    for (s, e) in ranges {
        ensure!(s == next, "vertical partitions must be disjoint and cover every attribute");
        next = e;
    }
    ensure!(next == d, "vertical partitions must cover every attribute");
    Ok(())
}

/// NMI against ground truth gathered from the custodians, if they have it.
fn evaluate(parties: &[Custodian], ids: &[u64], predicted: &[i64]) -> Result<Option<f64>> {
    let mut truth = BTreeMap::new();
    for p in parties {
        match p.labels() {
            Some(l) => truth.extend(l),
            None => return Ok(None),
        }
    }
    let labels = ids
        .iter()
        .map(|id| truth.get(id).copied().with_context(|| format!("no label for record {id}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(nmi(&labels, predicted)?))
}

/// Deals rows at random among `parties` horizontal slices.
pub fn split_horizontal(table: &Table, parties: usize, seed: u64) -> Vec<Table> {
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.shuffle(&mut derive_stream(seed, "split", 0));
    let mut out: Vec<Table> = (0..parties)
        .map(|_| Table {
            names: table.names.clone(),
            ids: Vec::new(),
            rows: Vec::new(),
            labels: table.labels.as_ref().map(|_| Vec::new()),
        })
        .collect();
    for (k, i) in order.into_iter().enumerate() {
        let t = &mut out[k % parties];
        t.ids.push(table.ids[i]);
        t.rows.push(table.rows[i].clone());
        if let (Some(dst), Some(src)) = (t.labels.as_mut(), table.labels.as_ref()) {
            dst.push(src[i]);
        }
    }
    out
}

/// Splits columns into `parties` contiguous, nearly equal ranges.
pub fn vertical_ranges(d: usize, parties: usize) -> Vec<(usize, usize)> {
    (0..parties)
        .map(|k| (k * d / parties, (k + 1) * d / parties))
        .collect()
}

/// Builds custodians for a dataset split `parties` ways.
pub fn custodians(table: &Table, schema: &Schema, parties: usize, vertical: bool, master_seed: u64) -> Result<Vec<Custodian>> {
    ensure!(parties >= 1, "need at least one party");
    if vertical {
        ensure!(parties >= 2 && parties <= schema.dimension(), "vertical split needs 2..=d parties");
        vertical_ranges(schema.dimension(), parties)
            .into_iter()
            .enumerate()
            .map(|(k, (start, end))| {
                Custodian::new(k as u64, Partition::Vertical { start, end }, table.columns(start, end), schema.clone(), master_seed)
            })
            .collect()
    } else {
        split_horizontal(table, parties, master_seed)
            .into_iter()
            .enumerate()
            .map(|(k, t)| Custodian::new(k as u64, Partition::Horizontal, t, schema.clone(), master_seed))
            .collect()
    }
}
