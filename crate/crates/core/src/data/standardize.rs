use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// Per-feature affine standardization fitted on training data.
///
/// Features with zero training variance keep std 1 and are listed in
/// `zero_variance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<usize>,
}

impl Standardizer {
    pub fn fit(train: &TabularDataset) -> Result<Self> {
        Self::fit_matrix(train.values())
    }

    /// Population mean and standard deviation per column.
    pub fn fit_matrix(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::usage("cannot fit a standardizer on zero rows"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let var = x.var_axis(Axis(0), 0.0);
        let mut zero_variance = Vec::new();
        let std: Vec<f64> = var
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let s = v.sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    zero_variance.push(j);
                    1.0
                }
            })
            .collect();
        Ok(Standardizer {
            mean: mean.to_vec(),
            std,
            zero_variance,
        })
    }

    /// The identity map for `d` features.
    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            zero_variance: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok((&x - &mean) / &std)
    }

    pub fn inverse_transform_matrix(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(z.ncols())?;
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok(&z * &std + &mean)
    }

    pub fn transform(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        ds.with_values(self.transform_matrix(ds.values())?)
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::config(format!(
                "standardizer fitted on {} features, data has {d}",
                self.dim()
            )));
        }
        Ok(())
    }
}
