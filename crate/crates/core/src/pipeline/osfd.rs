use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{fit_standardizer, ModelManifest, Scorer};
use crate::classifier::{train_classifier, Classifier, ClassifierConfig};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::icl::{IclConfig, IclModel};
use crate::metrics::Label;
use crate::outlier::{Decision, DistanceKind, RejectionRule};

/// Open-set diagnosis model: known-class classifier plus a rejection rule
/// on the joint score embeddings of all known classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OsfdModel {
    scorer: Scorer,
    classifier: Classifier,
    manifest: ModelManifest,
}

/// Batch diagnosis result, row-aligned with the input.
#[derive(Debug, Clone, PartialEq)]
pub struct OsfdOutput {
    pub scores: Array2<f64>,
    pub distances: Vec<f64>,
    pub probabilities: Array2<f64>,
    /// Classifier arg-max before rejection.
    pub classifier_labels: Vec<u32>,
    pub labels: Vec<Label>,
}

pub fn osfd_fit(
    known: &TabularDataset,
    icl_config: &IclConfig,
    clf_config: &ClassifierConfig,
    q: f64,
) -> Result<OsfdModel> {
    osfd_fit_with(known, icl_config, clf_config, DistanceKind::Mahalanobis, q)
}

/// Trains the classifier and one set of encoders on all known rows, then
/// fits the rule on those rows' score embeddings.
pub fn osfd_fit_with(
    known: &TabularDataset,
    icl_config: &IclConfig,
    clf_config: &ClassifierConfig,
    kind: DistanceKind,
    q: f64,
) -> Result<OsfdModel> {
    let classes = known.classes();
    if !classes.contains(&0) || classes.len() < 2 {
        return Err(Error::Config(format!(
            "open-set diagnosis needs normal data (class 0) and at least one fault class, found {classes:?}"
        )));
    }
    let standardizer = fit_standardizer(known)?;
    let z = known.with_values(standardizer.transform_matrix(known.values())?)?;
    let classifier =
        train_classifier(&z, clf_config).map_err(|e| e.in_stage("classifier training"))?;
    let scorer = Scorer::fit(known.values(), standardizer, icl_config, kind, q)?;
    let manifest = ModelManifest {
        task: "osfd".into(),
        dim: known.dim(),
        quantile: q,
        distance: kind,
        known_classes: classes.into_iter().collect(),
        icl: icl_config.clone(),
        classifier: Some(clf_config.clone()),
        data_fingerprint: known.fingerprint(),
        icl_fingerprint: scorer.icl.fingerprint(),
        classifier_fingerprint: Some(classifier.fingerprint()),
        standardizer: scorer.standardizer.clone(),
    };
    Ok(OsfdModel {
        scorer,
        classifier,
        manifest,
    })
}

/// Unknown when the distance exceeds `θ_u`, otherwise the classifier's class.
pub fn osfd_predict(model: &OsfdModel, x: ArrayView1<f64>) -> Result<Label> {
    Ok(model.predict_batch(x.insert_axis(Axis(0)))?.labels[0])
}

impl OsfdModel {
    pub fn icl(&self) -> &IclModel {
        &self.scorer.icl
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn rule(&self) -> &RejectionRule {
        &self.scorer.rule
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn known_classes(&self) -> &[u32] {
        &self.manifest.known_classes
    }

    pub fn train_scores(&self) -> Option<ArrayView2<'_, f64>> {
        self.scorer.train_scores.as_ref().map(|s| s.view())
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<OsfdOutput> {
        let (scores, distances) = self.scorer.score(x)?;
        let z = self.scorer.standardizer.transform_matrix(x)?;
        let (probabilities, classifier_labels) = self.classifier.predict_batch(z.view())?;
        let labels = distances
            .iter()
            .zip(&classifier_labels)
            .map(|(&d, &c)| match self.scorer.rule.classify(d) {
                Decision::Outlier => Label::Unknown,
                Decision::Inlier => Label::Known(c),
            })
            .collect();
        Ok(OsfdOutput {
            scores,
            distances,
            probabilities,
            classifier_labels,
            labels,
        })
    }

    /// Same encoders and classifier, rule refitted with another distance kind
    /// or quantile.
    pub fn with_rule(&self, kind: DistanceKind, q: f64) -> Result<Self> {
        let scorer = self.scorer.refit_rule(kind, q)?;
        let mut manifest = self.manifest.clone();
        manifest.distance = kind;
        manifest.quantile = q;
        Ok(OsfdModel {
            scorer,
            classifier: self.classifier.clone(),
            manifest,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.manifest.save(dir)?;
        self.scorer.save(dir)?;
        self.classifier.save(&dir.join("classifier"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = ModelManifest::load(dir, "osfd")?;
        let scorer = Scorer::load(dir, manifest.standardizer.clone())?;
        let classifier = Classifier::load(&dir.join("classifier"))?;
        Ok(OsfdModel {
            scorer,
            classifier,
            manifest,
        })
    }
}
