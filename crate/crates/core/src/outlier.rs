//! Gaussian statistics over score embeddings, Mahalanobis and alternative
//! distances, order-statistic thresholds and the inlier/outlier rule.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, mean_and_covariance, solve_lower};

/// Relative ridge: `ε · trace(Σ)/k` is added to the covariance diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Mean and ridge-regularized covariance with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    factor: Array2<f64>,
    ridge: f64,
}

impl GaussianStats {
    pub fn fit(scores: ArrayView2<f64>) -> Result<Self> {
        Self::fit_with_ridge(scores, DEFAULT_RIDGE)
    }

    /// Column means and sample covariance (divisor `n − 1`) plus the ridge.
    ///
    /// When the trace is zero the ridge is applied as an absolute `ε·I`.
    pub fn fit_with_ridge(scores: ArrayView2<f64>, ridge: f64) -> Result<Self> {
        if scores.nrows() < 2 {
            return Err(Error::usage(format!(
                "Gaussian fit needs at least 2 samples, got {}",
                scores.nrows()
            )));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::config("ridge must be finite and non-negative"));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite score embedding".into()));
        }
        let (mean, mut cov) = mean_and_covariance(scores)?;
        let k = cov.nrows();
        let trace = cov.diag().sum();
        let shift = if trace > 0.0 {
            ridge * trace / k as f64
        } else {
            ridge
        };
        for i in 0..k {
            cov[[i, i]] += shift;
        }
        Self::from_parts(mean, cov, ridge)
    }

    /// Rebuilds statistics from a stored mean and (already ridged) covariance.
    pub fn from_parts(mean: Array1<f64>, covariance: Array2<f64>, ridge: f64) -> Result<Self> {
        if covariance.dim() != (mean.len(), mean.len()) {
            return Err(Error::config("covariance shape does not match the mean"));
        }
        let factor = cholesky(covariance.view())?;
        Ok(GaussianStats {
            mean,
            covariance,
            factor,
            ridge,
        })
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn covariance(&self) -> ArrayView2<'_, f64> {
        self.covariance.view()
    }

    /// Lower-triangular `L` with `L·Lᵀ = Σ`.
    pub fn factor(&self) -> ArrayView2<'_, f64> {
        self.factor.view()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `sqrt((s−μ)ᵀ Σ⁻¹ (s−μ))` via a forward solve against the factor.
    pub fn mahalanobis(&self, s: ArrayView1<f64>) -> f64 {
        assert_eq!(
            s.len(),
            self.dim(),
            "score length must match the fitted dimension"
        );
        let diff = &s - &self.mean;
        let y = solve_lower(self.factor.view(), diff.view());
        y.dot(&y).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Mahalanobis,
    Euclidean,
    Cityblock,
    Canberra,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [
        DistanceKind::Mahalanobis,
        DistanceKind::Euclidean,
        DistanceKind::Cityblock,
        DistanceKind::Canberra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Mahalanobis => "mahalanobis",
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Cityblock => "cityblock",
            DistanceKind::Canberra => "canberra",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown distance kind {s:?}")))
    }
}

/// Center-based distances. Canberra terms with `|s|+|c| = 0` contribute 0.
pub fn alt_distance(
    kind: DistanceKind,
    center: ArrayView1<f64>,
    s: ArrayView1<f64>,
) -> Result<f64> {
    if center.len() != s.len() {
        return Err(Error::usage(format!(
            "distance between vectors of length {} and {}",
            center.len(),
            s.len()
        )));
    }
    let pairs = s.iter().zip(center.iter());
    Ok(match kind {
        DistanceKind::Euclidean => pairs.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        DistanceKind::Cityblock => pairs.map(|(a, b)| (a - b).abs()).sum(),
        DistanceKind::Canberra => pairs
            .map(|(a, b)| {
                let den = a.abs() + b.abs();
                if den == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / den
                }
            })
            .sum(),
        DistanceKind::Mahalanobis => {
            return Err(Error::config(
                "mahalanobis distance needs fitted Gaussian statistics, not a center",
            ))
        }
    })
}

/// The `⌈q·n/100⌉`-th smallest distance (1-based order statistic).
pub fn quantile_threshold(distances: &[f64], q: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::usage("quantile of an empty distance set"));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::config(format!(
            "quantile level {q} outside (0, 100]"
        )));
    }
    if distances.iter().any(|d| d.is_nan()) {
        return Err(Error::Numerical("NaN distance".into()));
    }
    let n = distances.len();
    let rank = ((q * n as f64 / 100.0) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Inlier,
    Outlier,
}

/// Distance kind, fitted statistics and quantile threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRule {
    pub kind: DistanceKind,
    pub stats: GaussianStats,
    pub theta: f64,
    pub quantile: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleJson {
    kind: DistanceKind,
    mu: Vec<f64>,
    /// Row-major ridged covariance.
    sigma: Vec<f64>,
    ridge: f64,
    theta: f64,
    quantile: f64,
}

impl RejectionRule {
    /// Fits statistics on training scores and sets `θ` at the `q`% quantile
    /// of the training distances.
    pub fn fit(kind: DistanceKind, train_scores: ArrayView2<f64>, q: f64) -> Result<Self> {
        let stats = GaussianStats::fit(train_scores)?;
        let mut rule = RejectionRule {
            kind,
            stats,
            theta: 0.0,
            quantile: q,
        };
        let d = rule.distances(train_scores);
        rule.theta = quantile_threshold(&d, q)?;
        Ok(rule)
    }

    /// Same statistics with `θ` re-derived at level `q` from `train_distances`.
    pub fn with_quantile(&self, train_distances: &[f64], q: f64) -> Result<Self> {
        Ok(RejectionRule {
            theta: quantile_threshold(train_distances, q)?,
            quantile: q,
            ..self.clone()
        })
    }

    pub fn distance(&self, s: ArrayView1<f64>) -> f64 {
        match self.kind {
            DistanceKind::Mahalanobis => self.stats.mahalanobis(s),
            kind => alt_distance(kind, self.stats.mean(), s).expect("lengths checked by caller"),
        }
    }

    pub fn distances(&self, scores: ArrayView2<f64>) -> Vec<f64> {
        scores
            .rows()
            .into_iter()
            .map(|r| self.distance(r))
            .collect()
    }

    pub fn classify(&self, distance: f64) -> Decision {
        classify_outlier(self, distance)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = RuleJson {
            kind: self.kind,
            mu: self.stats.mean.to_vec(),
            sigma: self.stats.covariance.iter().copied().collect(),
            ridge: self.stats.ridge,
            theta: self.theta,
            quantile: self.quantile,
        };
        let mut s = serde_json::to_string_pretty(&j)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: RuleJson = serde_json::from_str(text)?;
        let k = j.mu.len();
        if j.sigma.len() != k * k {
            return Err(Error::config("rule covariance has the wrong size"));
        }
        let cov =
            Array2::from_shape_vec((k, k), j.sigma).map_err(|e| Error::config(e.to_string()))?;
        Ok(RejectionRule {
            kind: j.kind,
            stats: GaussianStats::from_parts(Array1::from(j.mu), cov, j.ridge)?,
            theta: j.theta,
            quantile: j.quantile,
        })
    }
}

/// `d ≤ θ` is an inlier; anything larger is an outlier.
pub fn classify_outlier(rule: &RejectionRule, distance: f64) -> Decision {
    if distance <= rule.theta {
        Decision::Inlier
    } else {
        Decision::Outlier
    }
}
