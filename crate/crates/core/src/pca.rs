//! PCA process-monitoring baseline with Hotelling T² and SPE (Q) statistics.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean_and_covariance, symmetric_eigen};
use crate::outlier::quantile_threshold;

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// `D × r`, orthonormal columns.
    loadings: Array2<f64>,
    eigenvalues: Array1<f64>,
    retained_fraction: f64,
    t2_threshold: f64,
    spe_threshold: f64,
    quantile: f64,
}

#[derive(Serialize, Deserialize)]
struct PcaJson {
    mean: Vec<f64>,
    dim: usize,
    r: usize,
    /// Row-major `D × r`.
    loadings: Vec<f64>,
    eigenvalues: Vec<f64>,
    retained_fraction: f64,
    quantile: f64,
    t2_threshold: f64,
    spe_threshold: f64,
}

/// Fits PCA on `train`, keeping the fewest leading components whose
/// eigenvalues reach `variance_target` of the total, and sets both control
/// limits at the `q`% training quantile.
pub fn fit_pca(train: ArrayView2<f64>, variance_target: f64, q: f64) -> Result<PcaModel> {
    if train.nrows() < 2 {
        return Err(Error::config("PCA needs at least 2 training rows"));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::config(format!(
            "variance target must lie in (0, 1], got {variance_target}"
        )));
    }
    let (mean, cov) = mean_and_covariance(train)?;
    let (values, vectors) = symmetric_eigen(cov.view())?;
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::config("PCA input is constant in every column"));
    }
    let mut r = 0;
    let mut acc = 0.0;
    while r < values.len() && values[r] > 0.0 {
        acc += values[r];
        r += 1;
        if acc >= variance_target * total * (1.0 - 1e-12) {
            break;
        }
    }
    let mut model = PcaModel {
        mean,
        loadings: vectors.slice(s![.., ..r]).to_owned(),
        eigenvalues: values.slice(s![..r]).to_owned(),
        retained_fraction: acc / total,
        t2_threshold: 0.0,
        spe_threshold: 0.0,
        quantile: q,
    };
    let t2: Vec<f64> = train
        .rows()
        .into_iter()
        .map(|x| model.t2_statistic(x))
        .collect();
    let spe: Vec<f64> = train
        .rows()
        .into_iter()
        .map(|x| model.spe_statistic(x))
        .collect();
    model.t2_threshold = quantile_threshold(&t2, q)?;
    model.spe_threshold = quantile_threshold(&spe, q)?;
    Ok(model)
}

impl PcaModel {
    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn loadings(&self) -> ArrayView2<'_, f64> {
        self.loadings.view()
    }

    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    pub fn components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained_fraction
    }

    pub fn t2_threshold(&self) -> f64 {
        self.t2_threshold
    }

    pub fn spe_threshold(&self) -> f64 {
        self.spe_threshold
    }

    pub fn quantile(&self) -> f64 {
        self.quantile
    }

    /// Scores `t = Pᵀ (x − mean)`.
    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let c = &x - &self.mean;
        self.loadings.t().dot(&c)
    }

    /// Residual `(x − mean) − P Pᵀ (x − mean)`.
    pub fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let c = &x - &self.mean;
        let t = self.loadings.t().dot(&c);
        c - self.loadings.dot(&t)
    }

    pub fn t2_statistic(&self, x: ArrayView1<f64>) -> f64 {
        self.project(x)
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(t, l)| t * t / l)
            .sum()
    }

    pub fn spe_statistic(&self, x: ArrayView1<f64>) -> f64 {
        self.residual(x).iter().map(|v| v * v).sum()
    }

    /// 1 when either statistic exceeds its limit.
    pub fn detect(&self, x: ArrayView1<f64>) -> (u8, u8) {
        (
            (self.t2_statistic(x) > self.t2_threshold) as u8,
            (self.spe_statistic(x) > self.spe_threshold) as u8,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let j = PcaJson {
            mean: self.mean.to_vec(),
            dim: self.dim(),
            r: self.components(),
            loadings: self.loadings.iter().copied().collect(),
            eigenvalues: self.eigenvalues.to_vec(),
            retained_fraction: self.retained_fraction,
            quantile: self.quantile,
            t2_threshold: self.t2_threshold,
            spe_threshold: self.spe_threshold,
        };
        let mut s = serde_json::to_string_pretty(&j)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: PcaJson = serde_json::from_str(text)?;
        if j.mean.len() != j.dim || j.eigenvalues.len() != j.r || j.loadings.len() != j.dim * j.r {
            return Err(Error::config("PCA model JSON has inconsistent sizes"));
        }
        Ok(PcaModel {
            mean: Array1::from(j.mean),
            loadings: Array2::from_shape_vec((j.dim, j.r), j.loadings)
                .map_err(|e| Error::config(e.to_string()))?,
            eigenvalues: Array1::from(j.eigenvalues),
            retained_fraction: j.retained_fraction,
            t2_threshold: j.t2_threshold,
            spe_threshold: j.spe_threshold,
            quantile: j.quantile,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (1.0 + j as f64)
        })
    }

    #[test]
    fn diagonal_direction_is_first_loading() {
        let x = array![
            [1.0, 1.0],
            [2.0, 2.1],
            [3.0, 2.9],
            [4.0, 4.0],
            [-1.0, -1.05]
        ];
        let m = fit_pca(x.view(), 0.9, 98.0).unwrap();
        let l = m.loadings();
        let h = 1.0 / 2f64.sqrt();
        assert!((l[[0, 0]].abs() - h).abs() < 1e-2 && (l[[1, 0]].abs() - h).abs() < 1e-2);
        assert_eq!(m.components(), 1);
    }

    #[test]
    fn full_target_keeps_everything() {
        let x = random(50, 4, 1);
        let m = fit_pca(x.view(), 1.0, 98.0).unwrap();
        assert_eq!(m.components(), 4);
        for r in x.rows() {
            assert!(m.spe_statistic(r) < 1e-20);
        }
    }

    #[test]
    fn loadings_orthonormal_and_sorted() {
        let m = fit_pca(random(40, 5, 2).view(), 0.8, 98.0).unwrap();
        let g = m.loadings().t().dot(&m.loadings());
        let eye = Array2::<f64>::eye(m.components());
        assert!((&g - &eye).iter().all(|v| v.abs() < 1e-8));
        assert!(m.eigenvalues().windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn statistics_at_mean_are_zero() {
        let m = fit_pca(random(30, 3, 3).view(), 0.9, 98.0).unwrap();
        assert_eq!(m.t2_statistic(m.mean()), 0.0);
        assert_eq!(m.spe_statistic(m.mean()), 0.0);
    }

    #[test]
    fn reconstruction_is_exact() {
        let x = random(30, 4, 4);
        let m = fit_pca(x.view(), 0.7, 98.0).unwrap();
        for r in x.rows() {
            let rebuilt = m.loadings().dot(&m.project(r)) + m.residual(r);
            let c = &r - &m.mean();
            assert!((&rebuilt - &c).iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn constant_input_rejected() {
        let x = Array2::from_elem((5, 3), 2.0);
        assert!(matches!(
            fit_pca(x.view(), 0.9, 98.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quantile_contract_on_training_rows() {
        let x = random(200, 5, 5);
        let m = fit_pca(x.view(), 0.9, 90.0).unwrap();
        let pass = x
            .rows()
            .into_iter()
            .filter(|r| m.t2_statistic(*r) <= m.t2_threshold())
            .count();
        assert!(pass >= 180);
    }

    #[test]
    fn json_round_trip() {
        let m = fit_pca(random(20, 3, 6).view(), 0.9, 95.0).unwrap();
        assert_eq!(PcaModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
