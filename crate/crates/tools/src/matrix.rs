//! Distance-matrix files: dense CSV, raw binary, and revision flags.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use dpbv_core::DistanceMatrix;

pub fn write_csv<W: Write>(m: &DistanceMatrix, w: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let n = m.n();
    for i in 0..n {
        w.write_record((0..n).map(|j| m.get(i, j).to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DistanceMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i == 0 {
            n = rec.len();
        }
        ensure!(rec.len() == n, "row {i} has {} entries, expected {n}", rec.len());
        for v in rec.iter() {
            values.push(v.trim().parse::<f64>().with_context(|| format!("row {i}: malformed entry"))?);
        }
    }
    ensure!(values.len() == n * n, "matrix is not square");
    Ok(DistanceMatrix::from_values(n, values)?)
}

/// `u64 n` followed by `n²` row-major `f64`s, little-endian.
pub fn write_binary<W: Write>(m: &DistanceMatrix, mut w: W) -> Result<()> {
    w.write_all(&(m.n() as u64).to_le_bytes())?;
    for v in m.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DistanceMatrix> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let n = usize::try_from(u64::from_le_bytes(head))?;
    let mut buf = vec![0u8; n.checked_mul(n).and_then(|x| x.checked_mul(8)).context("matrix too large")?];
    r.read_exact(&mut buf).context("truncated matrix")?;
    let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DistanceMatrix::from_values(n, values)?)
}

pub fn write_revisions_csv<W: Write>(m: &DistanceMatrix, w: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let n = m.n();
    for i in 0..n {
        w.write_record((0..n).map(|j| m.revision(i, j).to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `.csv` as dense CSV and anything else as binary.
pub fn save(m: &DistanceMatrix, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let w = std::io::BufWriter::new(f);
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(m, w)
    } else {
        write_binary(m, w)
    }
}

pub fn load(path: &Path) -> Result<DistanceMatrix> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let r = std::io::BufReader::new(f);
    if path.extension().is_some_and(|e| e == "csv") {
        read_csv(r)
    } else {
        read_binary(r)
    }
    .with_context(|| format!("reading matrix {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let m = DistanceMatrix::from_fn(4, |i, j| (i * 7 + j) as f64 / 3.0);
        let mut csv = Vec::new();
        write_csv(&m, &mut csv).unwrap();
        assert_eq!(read_csv(csv.as_slice()).unwrap(), m);
        let mut bin = Vec::new();
        write_binary(&m, &mut bin).unwrap();
        assert_eq!(bin.len(), 8 + 16 * 8);
        assert_eq!(read_binary(bin.as_slice()).unwrap(), m);
        let mut rev = Vec::new();
        write_revisions_csv(&m, &mut rev).unwrap();
        assert_eq!(String::from_utf8(rev).unwrap().lines().next().unwrap(), "0,0,0,0");
    }
}
