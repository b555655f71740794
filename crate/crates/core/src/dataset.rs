//! In-memory records and range validation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::Schema;
use crate::error::{Error, Result};

/// One data point. `id` is the common identifier custodians use to align
/// vertically partitioned records.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub values: Vec<f64>,
    pub label: Option<i64>,
}

impl Record {
    pub fn new(id: u64, values: Vec<f64>) -> Self {
        Record {
            id,
            values,
            label: None,
        }
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<Record>,
}

/// What to do with values outside their attribute's declared range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangePolicy {
    #[default]
    Reject,
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    OutOfRange { record: usize, attribute: usize },
    NonFinite { record: usize, attribute: usize },
    DimensionMismatch { record: usize, expected: usize, found: usize },
    DuplicateId { record: usize, id: u64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Lists every out-of-range, non-finite or wrongly sized record. Never fails.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    if dataset.records.is_empty() {
        report.warnings.push(String::from("dataset is empty"));
        return report;
    }
    let d = dataset.schema.dimension();
    let mut ids: Vec<(u64, usize)> = dataset
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id, i))
        .collect();
    ids.sort_unstable();
    for pair in ids.windows(2) {
        if pair[0].0 == pair[1].0 {
            report.issues.push(ValidationIssue::DuplicateId {
                record: pair[1].1,
                id: pair[1].0,
            });
        }
    }
    for (i, record) in dataset.records.iter().enumerate() {
        if record.values.len() != d {
            report.issues.push(ValidationIssue::DimensionMismatch {
                record: i,
                expected: d,
                found: record.values.len(),
            });
            continue;
        }
        for (a, (value, attribute)) in record
            .values
            .iter()
            .zip(dataset.schema.attributes())
            .enumerate()
        {
            if !value.is_finite() {
                report
                    .issues
                    .push(ValidationIssue::NonFinite { record: i, attribute: a });
            } else if *value < attribute.lower || *value > attribute.upper {
                report
                    .issues
                    .push(ValidationIssue::OutOfRange { record: i, attribute: a });
            }
        }
    }
    report
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>) -> Self {
        Dataset { schema, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Validates, clamping out-of-range values under [`RangePolicy::Clamp`].
    /// Dimension mismatches and non-finite values are always errors.
    pub fn enforce(mut self, policy: RangePolicy) -> Result<Self> {
        let report = validate_dataset(&self);
        for issue in &report.issues {
            match *issue {
                ValidationIssue::OutOfRange { record, attribute } => match policy {
                    RangePolicy::Reject => {
                        let a = &self.schema.attributes()[attribute];
                        return Err(Error::OutOfRange {
                            attribute,
                            lower: a.lower,
                            upper: a.upper,
                        });
                    }
                    RangePolicy::Clamp => {
                        let (lo, hi) = {
                            let a = &self.schema.attributes()[attribute];
                            (a.lower, a.upper)
                        };
                        let v = &mut self.records[record].values[attribute];
                        *v = v.clamp(lo, hi);
                    }
                },
                ValidationIssue::NonFinite { attribute, .. } => {
                    return Err(Error::param(alloc::format!(
                        "non-finite value in attribute {attribute}"
                    )));
                }
                ValidationIssue::DimensionMismatch { expected, found, .. } => {
                    return Err(Error::DimensionMismatch { expected, found });
                }
                ValidationIssue::DuplicateId { id, .. } => {
                    return Err(Error::param(alloc::format!("duplicate record id {id}")));
                }
            }
        }
        Ok(self)
    }

    pub fn labels(&self) -> Option<Vec<i64>> {
        self.records.iter().map(|r| r.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EncodingConfig;
    use alloc::vec;

    fn schema() -> Schema {
        Schema::uniform(EncodingConfig::new(0.0, 50.0, 25.0, 100, 2.0, 1).unwrap(), 2).unwrap()
    }

    #[test]
    fn in_range_passes() {
        let ds = Dataset::new(
            schema(),
            vec![Record::new(0, vec![0.0, 50.0]), Record::new(1, vec![25.0, 3.5])],
        );
        let report = validate_dataset(&ds);
        assert!(report.passed());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn out_of_range_is_reported_with_index() {
        let ds = Dataset::new(
            schema(),
            vec![Record::new(0, vec![1.0, 1.0]), Record::new(1, vec![51.0, 1.0])],
        );
        let report = validate_dataset(&ds);
        assert!(!report.passed());
        assert_eq!(
            report.issues,
            vec![ValidationIssue::OutOfRange { record: 1, attribute: 0 }]
        );
    }

    #[test]
    fn empty_dataset_passes_with_warning() {
        let report = validate_dataset(&Dataset::new(schema(), vec![]));
        assert!(report.passed());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn dimension_mismatch_and_duplicates_are_reported() {
        let ds = Dataset::new(
            schema(),
            vec![Record::new(4, vec![1.0]), Record::new(4, vec![1.0, 2.0])],
        );
        let report = validate_dataset(&ds);
        assert_eq!(report.issues.len(), 2);
    }

    #[test]
    fn policy_rejects_by_default_and_clamps_on_request() {
        let ds = Dataset::new(schema(), vec![Record::new(0, vec![-3.0, 60.0])]);
        assert!(ds.clone().enforce(RangePolicy::default()).is_err());
        let clamped = ds.enforce(RangePolicy::Clamp).unwrap();
        assert_eq!(clamped.records[0].values, vec![0.0, 50.0]);
    }
}
