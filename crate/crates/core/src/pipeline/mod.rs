//! The two tasks end to end: process monitoring and open-set fault diagnosis.
//!
//! Both share one standardizer fitted on the training rows; it is applied
//! before the encoders, the classifier and scoring. A fitted model is a
//! directory:
//!
//! ```text
//! model.json        task, quantile, distance, configs, seeds, fingerprints, standardizer
//! rule.json         rejection rule (mean, covariance, ridge, θ)
//! icl/              f.nn, g.nn, icl.json
//! classifier/       classifier.nn, classes.json (open-set diagnosis only)
//! ```

mod osfd;
mod pm;

pub use osfd::{osfd_fit, osfd_fit_with, osfd_predict, OsfdModel, OsfdOutput};
pub use pm::{pm_detect, pm_fit, pm_fit_with, PmModel, PmOutput};

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::data::{Standardizer, TabularDataset};
use crate::error::{Error, Result};
use crate::icl::{train_icl_matrix, IclConfig, IclModel};
use crate::outlier::{DistanceKind, RejectionRule};

pub const DEFAULT_QUANTILE: f64 = 98.0;

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub task: String,
    pub dim: usize,
    pub quantile: f64,
    pub distance: DistanceKind,
    pub known_classes: Vec<u32>,
    pub icl: IclConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classifier: Option<ClassifierConfig>,
    pub data_fingerprint: String,
    pub icl_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classifier_fingerprint: Option<String>,
    pub standardizer: Standardizer,
}

impl ModelManifest {
    fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join("model.json"), text)?;
        Ok(())
    }

    fn load(dir: &Path, task: &str) -> Result<Self> {
        let m: ModelManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)?;
        if m.task != task {
            return Err(Error::Config(format!(
                "model directory holds a {} model, expected {task}",
                m.task
            )));
        }
        Ok(m)
    }
}

/// Encoders, rejection rule and the training scores they were fitted on.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Scorer {
    pub standardizer: Standardizer,
    pub icl: IclModel,
    pub rule: RejectionRule,
    /// Training score embeddings; only present on freshly fitted models.
    pub train_scores: Option<Array2<f64>>,
}

impl Scorer {
    fn fit(
        x: ArrayView2<f64>,
        standardizer: Standardizer,
        config: &IclConfig,
        kind: DistanceKind,
        q: f64,
    ) -> Result<Self> {
        let z = standardizer.transform_matrix(x)?;
        let icl = train_icl_matrix(z.view(), config).map_err(|e| e.in_stage("ICL training"))?;
        let scores = icl
            .score_batch(z.view())
            .map_err(|e| e.in_stage("scoring"))?;
        let rule = RejectionRule::fit(kind, scores.view(), q)
            .map_err(|e| e.in_stage("outlier statistics"))?;
        Ok(Scorer {
            standardizer,
            icl,
            rule,
            train_scores: Some(scores),
        })
    }

    /// Score embeddings and rule distances for raw rows.
    fn score(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
        let z = self.standardizer.transform_matrix(x)?;
        let scores = self.icl.score_batch(z.view())?;
        let d = self.rule.distances(scores.view());
        Ok((scores, d))
    }

    /// Same encoders with a rule of another kind or quantile, refitted on the
    /// stored training scores.
    fn refit_rule(&self, kind: DistanceKind, q: f64) -> Result<Self> {
        let scores = self.train_scores.as_ref().ok_or_else(|| {
            Error::Usage("a reloaded model has no training scores to refit on".into())
        })?;
        let rule = if kind == self.rule.kind {
            let d = self.rule.distances(scores.view());
            self.rule.with_quantile(&d, q)?
        } else {
            RejectionRule::fit(kind, scores.view(), q)?
        };
        Ok(Scorer {
            rule,
            ..self.clone()
        })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        self.icl.save(&dir.join("icl"))?;
        std::fs::write(dir.join("rule.json"), self.rule.to_json()?)?;
        Ok(())
    }

    fn load(dir: &Path, standardizer: Standardizer) -> Result<Self> {
        Ok(Scorer {
            standardizer,
            icl: IclModel::load(&dir.join("icl"))?,
            rule: RejectionRule::from_json(&std::fs::read_to_string(dir.join("rule.json"))?)?,
            train_scores: None,
        })
    }
}

fn fit_standardizer(train: &TabularDataset) -> Result<Standardizer> {
    Standardizer::fit(train).map_err(|e| e.in_stage("standardization"))
}
