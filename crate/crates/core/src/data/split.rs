use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// Known/unknown partition request.
///
/// Each known class contributes `train_fraction` of its rows (shuffled with
/// `seed`) to train and the rest to test; every unknown row goes to test.
/// Rows of classes listed in neither set are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub known: Vec<u32>,
    pub unknown: Vec<u32>,
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: TabularDataset,
    pub test: TabularDataset,
    /// Source row index of every train row.
    pub train_rows: Vec<usize>,
    /// Source row index of every test row.
    pub test_rows: Vec<usize>,
}

pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<Split> {
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::config(format!(
            "train fraction {} outside [0, 1]",
            spec.train_fraction
        )));
    }
    let known: BTreeSet<u32> = spec.known.iter().copied().collect();
    let unknown: BTreeSet<u32> = spec.unknown.iter().copied().collect();
    if let Some(c) = known.intersection(&unknown).next() {
        return Err(Error::config(format!(
            "class {c} listed as both known and unknown"
        )));
    }
    let present = ds.classes();
    if let Some(c) = known.union(&unknown).find(|c| !present.contains(c)) {
        return Err(Error::config(format!(
            "requested class {c} is absent from the data"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for &class in &known {
        let mut rows: Vec<usize> = (0..ds.n_rows())
            .filter(|&i| ds.labels()[i] == class)
            .collect();
        rows.shuffle(&mut rng);
        let n_train = (rows.len() as f64 * spec.train_fraction).round() as usize;
        train_rows.extend_from_slice(&rows[..n_train]);
        test_rows.extend_from_slice(&rows[n_train..]);
    }
    test_rows.extend((0..ds.n_rows()).filter(|&i| unknown.contains(&ds.labels()[i])));
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    Ok(Split {
        train: ds.select(&train_rows),
        test: ds.select(&test_rows),
        train_rows,
        test_rows,
    })
}
