//! Tabular datasets: CSV IO, normalisation, and conversion to records.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use dpbv_core::{Dataset, RangePolicy, Record, Schema};

/// Rows of numeric attributes with optional ids and ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub ids: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<i64>>,
}

impl Table {
    /// Ids default to row numbers.
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Option<Vec<i64>>) -> Self {
        let ids = (0..rows.len() as u64).collect();
        Table { names, ids, rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    /// Reads CSV with a header row. A leading `id` column and a trailing
    /// `label` column are recognised by name.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let has_id = header.first().is_some_and(|h| h == "id");
        let has_label = header.last().is_some_and(|h| h == "label") && header.len() > has_id as usize;
        let start = has_id as usize;
        let end = header.len() - has_label as usize;
        let names = header[start..end].to_vec();
        let mut table = Table {
            names,
            ids: Vec::new(),
            rows: Vec::new(),
            labels: has_label.then(Vec::new),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.with_context(|| format!("reading row {}", line + 1))?;
            if rec.len() != header.len() {
                bail!("row {} has {} fields, expected {}", line + 1, rec.len(), header.len());
            }
            let id = if has_id {
                rec[0].parse().with_context(|| format!("row {}: malformed id", line + 1))?
            } else {
                line as u64
            };
            let values = (start..end)
                .map(|i| rec[i].parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("row {}: malformed value", line + 1))?;
            if let Some(labels) = table.labels.as_mut() {
                labels.push(rec[end].parse().with_context(|| format!("row {}: malformed label", line + 1))?);
            }
            table.ids.push(id);
            table.rows.push(values);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
        Table::read_csv(f).with_context(|| format!("parsing dataset {}", path.display()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut fields = vec![self.ids[i].to_string()];
            fields.extend(row.iter().map(f64::to_string));
            if let Some(l) = &self.labels {
                fields.push(l[i].to_string());
            }
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_csv(f)
    }

    /// Rescales every column linearly onto `[lo, hi]`. Constant columns map to
    /// `lo`. Returns the original `(min, max)` per column.
    pub fn normalize(&mut self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let d = self.dimension();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for row in &self.rows {
            for (r, v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(*v);
                r.1 = r.1.max(*v);
            }
        }
        for row in &mut self.rows {
            for (v, (min, max)) in row.iter_mut().zip(&ranges) {
                *v = if max > min {
                    (lo + (*v - min) / (max - min) * (hi - lo)).clamp(lo, hi)
                } else {
                    lo
                };
            }
        }
        ranges
    }

    pub fn records(&self) -> Vec<Record> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let r = Record::new(self.ids[i], row.clone());
                match &self.labels {
                    Some(l) => r.with_label(l[i]),
                    None => r,
                }
            })
            .collect()
    }

    /// Validated dataset under `schema`.
    pub fn to_dataset(&self, schema: &Schema, policy: RangePolicy) -> Result<Dataset> {
        if schema.dimension() != self.dimension() {
            bail!(
                "dataset has {} attributes but the configuration declares {}",
                self.dimension(),
                schema.dimension()
            );
        }
        Ok(Dataset::new(schema.clone(), self.records()).enforce(policy)?)
    }

    /// Rows restricted to attribute columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Table {
        Table {
            names: self.names[start..end].to_vec(),
            ids: self.ids.clone(),
            rows: self.rows.iter().map(|r| r[start..end].to_vec()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Table {
        let n = n.min(self.len());
        Table {
            names: self.names.clone(),
            ids: self.ids[..n].to_vec(),
            rows: self.rows[..n].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_ids_and_labels() {
        let text = "id,a,b,label\n7,1.5,2,0\n9,3,4.25,1\n";
        let t = Table::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.ids, vec![7, 9]);
        assert_eq!(t.labels, Some(vec![0, 1]));
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(Table::read_csv(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn plain_csv_gets_row_ids() {
        let t = Table::read_csv("x,y\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(t.ids, vec![0, 1]);
        assert!(t.labels.is_none());
        assert!(Table::read_csv("x,y\n1,z\n".as_bytes()).is_err());
    }

    #[test]
    fn normalisation_handles_constant_columns() {
        let mut t = Table::new(vec!["a".into(), "b".into()], vec![vec![0.0, 5.0], vec![16.0, 5.0], vec![4.0, 5.0]], None);
        let ranges = t.normalize(0.0, 50.0);
        assert_eq!(ranges, vec![(0.0, 16.0), (5.0, 5.0)]);
        assert_eq!(t.rows[1], vec![50.0, 0.0]);
        assert_eq!(t.rows[2], vec![12.5, 0.0]);
    }
}
