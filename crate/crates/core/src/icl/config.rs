use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

/// Which terms the contrastive denominator sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorMode {
    /// Mismatched windows only (`d' ≠ d`).
    ExcludePositive,
    /// Every window, as in standard InfoNCE.
    IncludePositive,
}

/// Shape of the score embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// One loss per window position (`k` values).
    Vector,
    /// Sum of the per-position losses.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IclConfig {
    /// Sub-vector length `l`.
    pub l: usize,
    /// Temperature.
    pub tau: f64,
    /// Hidden-unit base: `F` uses `u, 2u`; `G` uses `u/4, u/2`.
    pub u: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub leaky_slope: f64,
    pub denominator_mode: DenominatorMode,
    pub score_mode: ScoreMode,
    pub seed: u64,
}

impl Default for IclConfig {
    fn default() -> Self {
        IclConfig {
            l: 2,
            tau: 0.01,
            u: 200,
            embed_dim: 64,
            lr: 1e-3,
            epochs: 200,
            batch_size: 128,
            leaky_slope: Activation::DEFAULT_LEAKY_SLOPE,
            denominator_mode: DenominatorMode::ExcludePositive,
            score_mode: ScoreMode::Vector,
            seed: 0,
        }
    }
}

impl IclConfig {
    /// Number of window positions for dimension `d`.
    pub fn positions(&self, dim: usize) -> usize {
        dim + 1 - self.l.min(dim)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.l == 0 || self.l + 1 > dim {
            return Err(Error::config(format!(
                "sub-vector length {} must satisfy 1 ≤ l ≤ D − 1 (D = {dim})",
                self.l
            )));
        }
        if self.positions(dim) < 2 {
            return Err(Error::config("need at least two window positions"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.u == 0 || !self.u.is_multiple_of(4) {
            return Err(Error::config(format!(
                "hidden-unit base u = {} must be a positive multiple of 4",
                self.u
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be ≥ 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::config("leaky slope must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_scheme() {
        let c = IclConfig::default();
        assert_eq!((c.l, c.u), (2, 200));
        assert_eq!(c.tau, 0.01);
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.positions(52), 51);
        c.validate(52).unwrap();
    }

    #[test]
    fn invalid_configs() {
        let c = IclConfig::default();
        assert!(c.validate(2).is_err());
        let mut c2 = c.clone();
        c2.u = 10;
        assert!(c2.validate(10).is_err());
        let mut c3 = c.clone();
        c3.tau = 0.0;
        assert!(c3.validate(10).is_err());
    }
}
