use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

/// An `n × D` sample matrix with one integer label per row.
///
/// Label 0 is normal operation; other ids are fault classes. When
/// `fault_onset` is set, the first `fault_onset` rows of every fault label
/// (in row order) precede the fault introduction.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    values: Array2<f64>,
    labels: Vec<u32>,
    variable_names: Vec<String>,
    fault_onset: Option<usize>,
}

impl TabularDataset {
    pub fn new(
        values: Array2<f64>,
        labels: Vec<u32>,
        variable_names: Vec<String>,
        fault_onset: Option<usize>,
    ) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(Error::config(format!(
                "{} labels for {} rows",
                labels.len(),
                values.nrows()
            )));
        }
        if variable_names.len() != values.ncols() {
            return Err(Error::config(format!(
                "{} variable names for {} columns",
                variable_names.len(),
                values.ncols()
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Ingest {
                row: r + 1,
                column: variable_names[c].clone(),
                message: "non-finite value".into(),
            });
        }
        Ok(TabularDataset {
            values,
            labels,
            variable_names,
            fault_onset,
        })
    }

    /// Unlabeled data with default names `x1..xD`, all rows labeled normal.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        let names = default_names(values.ncols());
        let labels = vec![0; values.nrows()];
        Self::new(values, labels, names, None)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn fault_onset(&self) -> Option<usize> {
        self.fault_onset
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        TabularDataset {
            values: self.values.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            variable_names: self.variable_names.clone(),
            fault_onset: self.fault_onset,
        }
    }

    /// Rows whose label is in `classes`, preserving order.
    pub fn filter_classes(&self, classes: &BTreeSet<u32>) -> Self {
        let idx: Vec<usize> = (0..self.n_rows())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.select(&idx)
    }

    /// Same labels and metadata with replaced values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(Error::usage("replacement values change the dataset shape"));
        }
        Self::new(
            values,
            self.labels.clone(),
            self.variable_names.clone(),
            self.fault_onset,
        )
    }

    pub fn with_onset(mut self, onset: Option<usize>) -> Self {
        self.fault_onset = onset;
        self
    }

    /// For each row: true when it is a fault-labeled row at or after the onset.
    ///
    /// Normal rows are never post-onset; without an onset every fault row is.
    pub fn post_onset_mask(&self) -> Vec<bool> {
        let onset = self.fault_onset.unwrap_or(0);
        let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
        self.labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    return false;
                }
                let pos = seen.entry(l).or_insert(0);
                let post = *pos >= onset;
                *pos += 1;
                post
            })
            .collect()
    }

    /// Fingerprint over shape, values and labels.
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprint::new();
        fp.bytes(&(self.n_rows() as u64).to_le_bytes())
            .bytes(&(self.dim() as u64).to_le_bytes())
            .floats(self.values.iter());
        for l in &self.labels {
            fp.bytes(&l.to_le_bytes());
        }
        fp.hex()
    }
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        let err = TabularDataset::new(
            array![[1.0, f64::NAN]],
            vec![0],
            vec!["a".into(), "b".into()],
            None,
        );
        assert!(matches!(err, Err(Error::Ingest { row: 1, .. })));
    }

    #[test]
    fn onset_mask_counts_per_label() {
        let ds = TabularDataset::new(
            Array2::zeros((6, 1)),
            vec![0, 1, 1, 2, 1, 2],
            vec!["a".into()],
            Some(1),
        )
        .unwrap();
        assert_eq!(
            ds.post_onset_mask(),
            vec![false, false, true, false, true, true]
        );
    }
}
