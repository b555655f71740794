//! Encoded-dataset files.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "DPBV"  u16 version  u8 mechanism  u8 reserved  u64 fingerprint
//! u32 s   u32 d        u64 n
//! n × ( u64 record id, d × ceil(s/8) bytes )
//! ```
//!
//! Bits are packed least significant first within each byte, attributes in
//! order within a record. The JSON-lines variant holds a header object then one
//! `{"id", "bits"}` object per record, with bits as arrays of 0/1.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dpbv_core::{BitVector, EncodedRecord, Fingerprint, Mechanism};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"DPBV";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    pub mechanism: Mechanism,
    pub fingerprint: Fingerprint,
    pub s: usize,
    pub d: usize,
    pub records: Vec<EncodedRecord>,
}

impl EncodedDataset {
    /// Checks that every record matches the header.
    pub fn new(mechanism: Mechanism, fingerprint: Fingerprint, s: usize, d: usize, records: Vec<EncodedRecord>) -> Result<Self> {
        for r in &records {
            ensure!(r.mechanism == mechanism, "record {} uses a different mechanism", r.id);
            ensure!(r.fingerprint == fingerprint, "record {} has a different configuration fingerprint", r.id);
            ensure!(r.vectors.len() == d, "record {} has {} attributes, expected {d}", r.id, r.vectors.len());
            ensure!(r.vectors.iter().all(|v| v.len() == s), "record {} has vectors of the wrong length", r.id);
        }
        Ok(EncodedDataset { mechanism, fingerprint, s, d, records })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.mechanism.code(), 0])?;
        w.write_all(&self.fingerprint.0.to_le_bytes())?;
        w.write_all(&u32::try_from(self.s)?.to_le_bytes())?;
        w.write_all(&u32::try_from(self.d)?.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 + self.d * self.s.div_ceil(8));
        for r in &self.records {
            buf.clear();
            buf.extend_from_slice(&r.id.to_le_bytes());
            for v in &r.vectors {
                v.write_bytes(&mut buf);
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_binary(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 32];
        r.read_exact(&mut head).context("truncated header")?;
        if &head[0..4] != MAGIC {
            bail!("not an encoded dataset (bad magic)");
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        ensure!(version == VERSION, "unsupported format version {version}");
        let mechanism = Mechanism::from_code(head[6]).with_context(|| format!("unknown mechanism code {}", head[6]))?;
        let fingerprint = Fingerprint(u64::from_le_bytes(head[8..16].try_into()?));
        let s = u32::from_le_bytes(head[16..20].try_into()?) as usize;
        let d = u32::from_le_bytes(head[20..24].try_into()?) as usize;
        let n = u64::from_le_bytes(head[24..32].try_into()?);
        let per_vec = s.div_ceil(8);
        let mut row = vec![0u8; 8 + d * per_vec];
        let mut records = Vec::new();
        for i in 0..n {
            r.read_exact(&mut row).with_context(|| format!("truncated record {i}"))?;
            let id = u64::from_le_bytes(row[0..8].try_into()?);
            let vectors = (0..d)
                .map(|a| BitVector::from_bytes(&row[8 + a * per_vec..8 + (a + 1) * per_vec], s))
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("record {id}"))?;
            records.push(EncodedRecord { id, mechanism, fingerprint, vectors });
        }
        let mut rest = [0u8; 1];
        ensure!(r.read(&mut rest)? == 0, "trailing bytes after {n} records");
        Ok(EncodedDataset { mechanism, fingerprint, s, d, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_binary(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        EncodedDataset::read_binary(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = JsonHeader {
            format: "dpbv-jsonl".into(),
            version: VERSION,
            mechanism: self.mechanism.as_str().into(),
            fingerprint: self.fingerprint.to_string(),
            s: self.s,
            d: self.d,
            n: self.records.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            let row = JsonRecord {
                id: r.id,
                bits: r.vectors.iter().map(|v| v.iter().map(u8::from).collect()).collect(),
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header: JsonHeader = serde_json::from_str(&lines.next().context("empty file")??)?;
        ensure!(header.format == "dpbv-jsonl", "not a dpbv JSON-lines file");
        let mechanism: Mechanism = header.mechanism.parse()?;
        let fingerprint: Fingerprint = header.fingerprint.parse()?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonRecord = serde_json::from_str(&line)?;
            let vectors = row
                .bits
                .iter()
                .map(|bits| {
                    ensure!(bits.iter().all(|b| *b <= 1), "bits must be 0 or 1");
                    Ok(BitVector::from_bools(bits.iter().map(|b| *b == 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(EncodedRecord { id: row.id, mechanism, fingerprint, vectors });
        }
        ensure!(records.len() == header.n, "header announces {} records, found {}", header.n, records.len());
        EncodedDataset::new(mechanism, fingerprint, header.s, header.d, records)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    format: String,
    version: u16,
    mechanism: String,
    fingerprint: String,
    s: usize,
    d: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: u64,
    bits: Vec<Vec<u8>>,
}
