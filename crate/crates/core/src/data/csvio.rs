use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;

use super::TabularDataset;
use crate::error::{Error, Result};

/// How to read a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Integer label column; `None` reads every row as normal (label 0).
    pub label_column: Option<String>,
    /// When set, labels outside this set are rejected.
    pub allowed_labels: Option<BTreeSet<u32>>,
    pub fault_onset: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_column: Some("label".into()),
            allowed_labels: None,
            fault_onset: None,
        }
    }
}

impl CsvSchema {
    pub fn unlabeled() -> Self {
        CsvSchema {
            label_column: None,
            ..Self::default()
        }
    }
}

/// Reads a comma-separated file with a header row.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TabularDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Ingest {
        row: 0,
        column: String::new(),
        message: format!("cannot open {}: {e}", path.display()),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Ingest {
            row: 0,
            column: String::new(),
            message: "missing header row".into(),
        });
    }

    let label_idx = match &schema.label_column {
        Some(name) => {
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Ingest {
                        row: 0,
                        column: name.clone(),
                        message: "label column not found in header".into(),
                    })?,
            )
        }
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != label_idx)
        .collect();
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Ingest {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                row,
                column: headers[c].clone(),
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row,
                    column: headers[c].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        let label = match label_idx {
            Some(c) => {
                let cell = &record[c];
                let l: u32 = cell.parse().map_err(|_| Error::Ingest {
                    row,
                    column: headers[c].clone(),
                    message: format!("label must be a non-negative integer, got {cell:?}"),
                })?;
                if let Some(allowed) = &schema.allowed_labels {
                    if !allowed.contains(&l) {
                        return Err(Error::Ingest {
                            row,
                            column: headers[c].clone(),
                            message: format!("unknown label value {l}"),
                        });
                    }
                }
                l
            }
            None => 0,
        };
        labels.push(label);
    }

    let n = labels.len();
    let matrix = Array2::from_shape_vec((n, names.len()), values)
        .map_err(|e| Error::usage(e.to_string()))?;
    TabularDataset::new(matrix, labels, names, schema.fault_onset)
}

/// Writes the dataset with a trailing `label` column. Floats use the shortest
/// representation that round-trips, so output is byte-stable.
pub fn write_csv(path: &Path, ds: &TabularDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.variable_names().iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(ds.dim() + 1);
    for i in 0..ds.n_rows() {
        record.clear();
        record.extend(ds.row(i).iter().map(|v| v.to_string()));
        record.push(ds.labels()[i].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
