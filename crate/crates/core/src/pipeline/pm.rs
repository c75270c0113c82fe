use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{fit_standardizer, ModelManifest, Scorer};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::icl::{IclConfig, IclModel};
use crate::outlier::{Decision, DistanceKind, RejectionRule};

/// Process-monitoring model fitted on normal data only.
#[derive(Debug, Clone, PartialEq)]
pub struct PmModel {
    scorer: Scorer,
    manifest: ModelManifest,
}

/// Batch monitoring result, row-aligned with the input.
#[derive(Debug, Clone, PartialEq)]
pub struct PmOutput {
    pub scores: Array2<f64>,
    pub distances: Vec<f64>,
    /// 1 = fault alarm.
    pub predictions: Vec<u8>,
}

pub fn pm_fit(normal: &TabularDataset, config: &IclConfig, q: f64) -> Result<PmModel> {
    pm_fit_with(normal, config, DistanceKind::Mahalanobis, q)
}

/// Trains the encoders on normal rows, fits the rule on their score
/// embeddings and sets `θ₀` at the `q`% training quantile.
pub fn pm_fit_with(
    normal: &TabularDataset,
    config: &IclConfig,
    kind: DistanceKind,
    q: f64,
) -> Result<PmModel> {
    if let Some(bad) = normal.labels().iter().find(|&&l| l != 0) {
        return Err(Error::Config(format!(
            "process monitoring trains on normal data only, found label {bad}"
        )));
    }
    let standardizer = fit_standardizer(normal)?;
    let scorer = Scorer::fit(normal.values(), standardizer, config, kind, q)?;
    let manifest = ModelManifest {
        task: "pm".into(),
        dim: normal.dim(),
        quantile: q,
        distance: kind,
        known_classes: vec![0],
        icl: config.clone(),
        classifier: None,
        data_fingerprint: normal.fingerprint(),
        icl_fingerprint: scorer.icl.fingerprint(),
        classifier_fingerprint: None,
        standardizer: scorer.standardizer.clone(),
    };
    Ok(PmModel { scorer, manifest })
}

/// 1 when the sample's distance exceeds `θ₀`, else 0.
pub fn pm_detect(model: &PmModel, x: ArrayView1<f64>) -> Result<u8> {
    let out = model.detect_batch(x.insert_axis(Axis(0)))?;
    Ok(out.predictions[0])
}

impl PmModel {
    pub fn icl(&self) -> &IclModel {
        &self.scorer.icl
    }

    pub fn rule(&self) -> &RejectionRule {
        &self.scorer.rule
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn train_scores(&self) -> Option<ArrayView2<'_, f64>> {
        self.scorer.train_scores.as_ref().map(|s| s.view())
    }

    pub fn detect_batch(&self, x: ArrayView2<f64>) -> Result<PmOutput> {
        let (scores, distances) = self.scorer.score(x)?;
        let predictions = distances
            .iter()
            .map(|&d| (self.scorer.rule.classify(d) == Decision::Outlier) as u8)
            .collect();
        Ok(PmOutput {
            scores,
            distances,
            predictions,
        })
    }

    /// Same encoders, rule refitted with another distance kind or quantile.
    pub fn with_rule(&self, kind: DistanceKind, q: f64) -> Result<Self> {
        let scorer = self.scorer.refit_rule(kind, q)?;
        let mut manifest = self.manifest.clone();
        manifest.distance = kind;
        manifest.quantile = q;
        Ok(PmModel { scorer, manifest })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.manifest.save(dir)?;
        self.scorer.save(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = ModelManifest::load(dir, "pm")?;
        let scorer = Scorer::load(dir, manifest.standardizer.clone())?;
        Ok(PmModel { scorer, manifest })
    }
}
