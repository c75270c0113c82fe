//! Evaluation metrics: FDR, confusion matrix, per-class and macro F1, AUROC.

mod report;

pub use report::{
    build_report, osfd_metrics, pm_metrics, write_scores_csv, BinaryF1, DataSummary,
    DiagnosisReport, ModelSummary, OsfdMetrics, PmMetrics, ReportHeader, RunOutputs,
    SamplePrediction, REPORT_SCHEMA_VERSION,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default pre-onset alarm rate above which a run is marked over-threshold.
pub const DEFAULT_OT_LIMIT: f64 = 0.5;

/// A class as reported: a known id or the reserved unknown class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Known(u32),
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(id) => write!(f, "{id}"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Label::Known(id) => s.serialize_u32(*id),
            Label::Unknown => s.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(Label::Known(id)),
            Raw::Name(n) if n == "unknown" => Ok(Label::Unknown),
            Raw::Name(n) => Err(serde::de::Error::custom(format!("unexpected label {n:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub fdr: f64,
    pub miss_rate: f64,
    pub n_fault: usize,
    pub n_detected: usize,
    pub n_pre_onset: usize,
    pub pre_onset_alarm_rate: Option<f64>,
    pub over_threshold: bool,
}

/// Fault detection rate over rows with `fault_mask` set, plus the alarm rate
/// over `pre_onset_mask` rows; the run is flagged over-threshold when that
/// rate exceeds `ot_limit`.
pub fn fdr(
    predictions: &[u8],
    fault_mask: &[bool],
    pre_onset_mask: &[bool],
    ot_limit: f64,
) -> Result<FdrResult> {
    if predictions.len() != fault_mask.len() || predictions.len() != pre_onset_mask.len() {
        return Err(Error::usage("fdr inputs differ in length"));
    }
    let n_fault = fault_mask.iter().filter(|&&m| m).count();
    if n_fault == 0 {
        return Err(Error::usage(
            "fdr needs at least one post-onset fault sample",
        ));
    }
    let n_detected = predictions
        .iter()
        .zip(fault_mask)
        .filter(|(&p, &m)| m && p == 1)
        .count();
    let n_pre_onset = pre_onset_mask.iter().filter(|&&m| m).count();
    let pre_alarms = predictions
        .iter()
        .zip(pre_onset_mask)
        .filter(|(&p, &m)| m && p == 1)
        .count();
    let pre_onset_alarm_rate = (n_pre_onset > 0).then(|| pre_alarms as f64 / n_pre_onset as f64);
    Ok(FdrResult {
        fdr: n_detected as f64 / n_fault as f64,
        miss_rate: (n_fault - n_detected) as f64 / n_fault as f64,
        n_fault,
        n_detected,
        n_pre_onset,
        pre_onset_alarm_rate,
        over_threshold: pre_onset_alarm_rate.is_some_and(|r| r > ot_limit),
    })
}

/// Fraction of `normal_mask` rows flagged; `None` when there are none.
pub fn false_alarm_rate(predictions: &[u8], normal_mask: &[bool]) -> Result<Option<f64>> {
    if predictions.len() != normal_mask.len() {
        return Err(Error::usage("false-alarm inputs differ in length"));
    }
    let n = normal_mask.iter().filter(|&&m| m).count();
    let alarms = predictions
        .iter()
        .zip(normal_mask)
        .filter(|(&p, &m)| m && p == 1)
        .count();
    Ok((n > 0).then(|| alarms as f64 / n as f64))
}

/// Square confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<Label>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(labels: Vec<Label>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::usage(
                "confusion matrix must be square and match its labels",
            ));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn from_predictions(
        labels: Vec<Label>,
        truth: &[Label],
        predicted: &[Label],
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::usage(format!(
                "{} ground-truth labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = ConfusionMatrix::new(labels);
        for (t, p) in truth.iter().zip(predicted) {
            m.add(*t, *p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: Label, predicted: Label) -> Result<()> {
        let i = self.index(truth)?;
        let j = self.index(predicted)?;
        self.counts[i][j] += 1;
        Ok(())
    }

    fn index(&self, label: Label) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::usage(format!("label {label} is not in the confusion matrix")))
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
    /// Never present and never predicted; left out of the macro average.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_class: Vec<ClassF1>,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class F1 (0/0 counts as 0) and their unweighted mean over classes
/// that occur in the truth or the predictions.
pub fn f1(confusion: &ConfusionMatrix) -> F1Scores {
    let n = confusion.size();
    let per_class: Vec<ClassF1> = (0..n)
        .map(|i| {
            let tp = confusion.counts[i][i];
            let support: u64 = confusion.counts[i].iter().sum();
            let predicted: u64 = (0..n).map(|r| confusion.counts[r][i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassF1 {
                label: confusion.labels[i],
                precision,
                recall,
                f1,
                support,
                predicted,
                excluded: support == 0 && predicted == 0,
            }
        })
        .collect();
    let used: Vec<f64> = per_class
        .iter()
        .filter(|c| !c.excluded)
        .map(|c| c.f1)
        .collect();
    let macro_f1 = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    F1Scores {
        per_class,
        macro_f1,
    }
}

/// Rank-based AUROC of `scores` for separating `positive` rows, with half
/// credit for ties. Equal to the all-pairs comparison count.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::usage("auroc inputs differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::usage("auroc scores contain NaN"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u64;
    let n_neg = positive.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::usage(
            "auroc needs both positive and negative samples",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann-Whitney U, kept integral
    let mut twice_u: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let (mut pos, mut neg) = (0u64, 0u64);
        for &k in &order[i..j] {
            if positive[k] {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        twice_u += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, n })
}
