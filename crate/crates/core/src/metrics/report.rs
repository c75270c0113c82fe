use std::collections::BTreeMap;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{auroc, f1, false_alarm_rate, fdr, ConfusionMatrix, F1Scores, FdrResult, Label};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub known_classes: Vec<u32>,
    pub unknown_classes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub icl_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classifier_fingerprint: Option<String>,
    pub distance: String,
    pub quantile: f64,
    pub theta: f64,
    pub score_dim: usize,
    pub final_loss: Option<f64>,
}

/// Everything about a run that is not derived from its predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub task: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub data: DataSummary,
    pub model: ModelSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample_id: usize,
    pub true_label: u32,
    pub predicted: Label,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmMetrics {
    /// Rows: normal (0) / fault (1) ground truth; pre-onset fault rows count as normal.
    pub confusion: ConfusionMatrix,
    pub fdr: Option<FdrResult>,
    pub fdr_by_fault: BTreeMap<u32, FdrResult>,
    pub false_alarm_rate: Option<f64>,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryF1 {
    pub labels: [String; 2],
    pub counts: [[u64; 2]; 2],
    pub f1_known: f64,
    pub f1_unknown: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsfdMetrics {
    /// 1-based output position of the unknown class (number of known classes + 1).
    pub unknown_output_id: usize,
    pub confusion: ConfusionMatrix,
    pub f1: F1Scores,
    pub known_unknown_f1: BinaryF1,
    pub unknown_auroc: Option<f64>,
    pub unknown_rate: f64,
}

/// Per-sample outputs of a run, aligned with the test rows.
pub enum RunOutputs<'a> {
    Pm {
        labels: &'a [u32],
        post_onset: &'a [bool],
        predictions: &'a [u8],
        distances: &'a [f64],
        ot_limit: f64,
    },
    Osfd {
        labels: &'a [u32],
        known: &'a [u32],
        predicted: &'a [Label],
        distances: &'a [f64],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub schema_version: u32,
    pub task: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub data: DataSummary,
    pub model: ModelSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pm: Option<PmMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub osfd: Option<OsfdMetrics>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub baselines: BTreeMap<String, PmMetrics>,
    pub predictions: Vec<SamplePrediction>,
}

impl DiagnosisReport {
    /// Pretty JSON with a trailing newline; field and key order are fixed.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_len(what: &str, n: usize, got: usize) -> Result<()> {
    if n != got {
        return Err(Error::usage(format!(
            "{what} has {got} entries, expected {n}"
        )));
    }
    Ok(())
}

/// Process-monitoring metrics from 0/1 alarms.
pub fn pm_metrics(
    labels: &[u32],
    post_onset: &[bool],
    predictions: &[u8],
    distances: &[f64],
    ot_limit: f64,
) -> Result<PmMetrics> {
    let n = labels.len();
    check_len("onset mask", n, post_onset.len())?;
    check_len("predictions", n, predictions.len())?;
    check_len("distances", n, distances.len())?;
    if predictions.iter().any(|&p| p > 1) {
        return Err(Error::usage("monitoring predictions must be 0 or 1"));
    }
    let truth: Vec<Label> = post_onset.iter().map(|&f| Label::Known(f as u32)).collect();
    let pred: Vec<Label> = predictions
        .iter()
        .map(|&p| Label::Known(p as u32))
        .collect();
    let confusion =
        ConfusionMatrix::from_predictions(vec![Label::Known(0), Label::Known(1)], &truth, &pred)?;

    let pre_onset: Vec<bool> = labels
        .iter()
        .zip(post_onset)
        .map(|(&l, &p)| l != 0 && !p)
        .collect();
    let overall = if post_onset.iter().any(|&p| p) {
        Some(fdr(predictions, post_onset, &pre_onset, ot_limit)?)
    } else {
        None
    };
    let mut fdr_by_fault = BTreeMap::new();
    for fault in labels
        .iter()
        .copied()
        .filter(|&l| l != 0)
        .collect::<std::collections::BTreeSet<_>>()
    {
        let post: Vec<bool> = labels
            .iter()
            .zip(post_onset)
            .map(|(&l, &p)| l == fault && p)
            .collect();
        if !post.iter().any(|&p| p) {
            continue;
        }
        let pre: Vec<bool> = labels
            .iter()
            .zip(&pre_onset)
            .map(|(&l, &p)| l == fault && p)
            .collect();
        fdr_by_fault.insert(fault, fdr(predictions, &post, &pre, ot_limit)?);
    }
    let normal: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
    let negatives: Vec<bool> = post_onset.iter().map(|&p| !p).collect();
    let auroc = if post_onset.iter().any(|&p| p) && negatives.iter().any(|&p| p) {
        Some(auroc(distances, post_onset)?)
    } else {
        None
    };
    Ok(PmMetrics {
        confusion,
        fdr: overall,
        fdr_by_fault,
        false_alarm_rate: false_alarm_rate(predictions, &normal)?,
        auroc,
    })
}

/// Open-set diagnosis metrics. Test labels outside `known` are ground-truth unknown.
pub fn osfd_metrics(
    labels: &[u32],
    known: &[u32],
    predicted: &[Label],
    distances: &[f64],
) -> Result<OsfdMetrics> {
    let n = labels.len();
    check_len("predictions", n, predicted.len())?;
    check_len("distances", n, distances.len())?;
    let mut class_labels: Vec<Label> = known.iter().map(|&k| Label::Known(k)).collect();
    class_labels.sort();
    class_labels.dedup();
    let n_known = class_labels.len();
    class_labels.push(Label::Unknown);
    let truth: Vec<Label> = labels
        .iter()
        .map(|&l| {
            if known.contains(&l) {
                Label::Known(l)
            } else {
                Label::Unknown
            }
        })
        .collect();
    let confusion = ConfusionMatrix::from_predictions(class_labels, &truth, predicted)?;
    let scores = f1(&confusion);

    let is_unknown = |l: &Label| (*l == Label::Unknown) as usize;
    let mut counts = [[0u64; 2]; 2];
    for (t, p) in truth.iter().zip(predicted) {
        counts[is_unknown(t)][is_unknown(p)] += 1;
    }
    let binary = ConfusionMatrix::from_counts(
        vec![Label::Known(0), Label::Unknown],
        counts.iter().map(|r| r.to_vec()).collect(),
    )?;
    let bf = f1(&binary);
    let known_unknown_f1 = BinaryF1 {
        labels: ["known".into(), "unknown".into()],
        counts,
        f1_known: bf.per_class[0].f1,
        f1_unknown: bf.per_class[1].f1,
        macro_f1: bf.macro_f1,
    };
    let truth_unknown: Vec<bool> = truth.iter().map(|t| *t == Label::Unknown).collect();
    let unknown_auroc = if truth_unknown.iter().any(|&u| u) && truth_unknown.iter().any(|&u| !u) {
        Some(auroc(distances, &truth_unknown)?)
    } else {
        None
    };
    let n_unknown = predicted.iter().filter(|p| **p == Label::Unknown).count();
    Ok(OsfdMetrics {
        unknown_output_id: n_known + 1,
        confusion,
        f1: scores,
        known_unknown_f1,
        unknown_auroc,
        unknown_rate: if n == 0 {
            0.0
        } else {
            n_unknown as f64 / n as f64
        },
    })
}

/// Assembles metrics and per-sample predictions into a report.
pub fn build_report(header: ReportHeader, outputs: RunOutputs<'_>) -> Result<DiagnosisReport> {
    let (pm, osfd, predictions) = match outputs {
        RunOutputs::Pm {
            labels,
            post_onset,
            predictions,
            distances,
            ot_limit,
        } => {
            let m = pm_metrics(labels, post_onset, predictions, distances, ot_limit)?;
            let samples = (0..labels.len())
                .map(|i| SamplePrediction {
                    sample_id: i,
                    true_label: labels[i],
                    predicted: Label::Known(predictions[i] as u32),
                    distance: distances[i],
                })
                .collect();
            (Some(m), None, samples)
        }
        RunOutputs::Osfd {
            labels,
            known,
            predicted,
            distances,
        } => {
            let m = osfd_metrics(labels, known, predicted, distances)?;
            let samples = (0..labels.len())
                .map(|i| SamplePrediction {
                    sample_id: i,
                    true_label: labels[i],
                    predicted: predicted[i],
                    distance: distances[i],
                })
                .collect();
            (None, Some(m), samples)
        }
    };
    Ok(DiagnosisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task: header.task,
        seed: header.seed,
        config: header.config,
        data: header.data,
        model: header.model,
        pm,
        osfd,
        baselines: BTreeMap::new(),
        predictions,
    })
}

/// Writes `sample_id,true_label,predicted,distance,score_0..score_{k−1}`.
pub fn write_scores_csv(
    path: &Path,
    samples: &[SamplePrediction],
    scores: ArrayView2<f64>,
) -> Result<()> {
    check_len("score rows", samples.len(), scores.nrows())?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "sample_id".to_string(),
        "true_label".into(),
        "predicted".into(),
        "distance".into(),
    ];
    header.extend((0..scores.ncols()).map(|j| format!("score_{j}")));
    w.write_record(&header)?;
    for (s, row) in samples.iter().zip(scores.rows()) {
        let mut rec = vec![
            s.sample_id.to_string(),
            s.true_label.to_string(),
            s.predicted.to_string(),
            s.distance.to_string(),
        ];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
