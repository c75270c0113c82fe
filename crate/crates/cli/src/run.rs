use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use goofd::data::{load_csv, write_csv, CsvSchema, Manifest, SynthPlan, TabularDataset};
use goofd::metrics::{
    build_report, mean_std, osfd_metrics, pm_metrics, write_scores_csv, DataSummary,
    DiagnosisReport, Label, MeanStd, ModelSummary, ReportHeader, RunOutputs,
};
use goofd::outlier::DistanceKind;
use goofd::pca::fit_pca;
use goofd::pipeline::{osfd_fit_with, pm_fit_with, OsfdModel, OsfdOutput, PmModel};
use goofd::{Error, Result};
use serde::Serialize;

use crate::config::{Baseline, RunConfig};

pub const THRESHOLD_SWEEP: [f64; 6] = [80.0, 85.0, 90.0, 95.0, 98.0, 100.0];

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn io_context(e: Error, what: &str, path: &Path) -> Error {
    e.in_stage(format!("{what} {}", path.display()))
}

/// `synth`: writes one CSV per plan part plus `manifest.json`.
pub fn synth(plan_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(plan_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", plan_path.display())))?;
    let mut plan: SynthPlan = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "invalid synthetic spec {}: {e}",
            plan_path.display()
        ))
    })?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    std::fs::create_dir_all(out)?;
    for (name, spec) in plan.specs() {
        let ds =
            goofd::data::synth_generate(&spec).map_err(|e| e.in_stage(format!("part {name:?}")))?;
        write_csv(&out.join(format!("{name}.csv")), &ds)?;
        println!("{name}: {} rows × {} features", ds.n_rows(), ds.dim());
    }
    plan.manifest().save(&out.join("manifest.json"))?;
    write_json(&out.join("plan.json"), &plan)?;
    Ok(())
}

struct Inputs {
    manifest: Manifest,
    train: TabularDataset,
    test: TabularDataset,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let train_path = cfg.train_path()?;
    let test_path = cfg.test_path()?;
    let manifest = match &cfg.manifest {
        Some(p) => Manifest::load(Path::new(p))
            .map_err(|e| io_context(e, "reading manifest", Path::new(p)))?,
        None => {
            let sibling = train_path.with_file_name("manifest.json");
            if sibling.is_file() {
                Manifest::load(&sibling).map_err(|e| io_context(e, "reading manifest", &sibling))?
            } else {
                Manifest::default()
            }
        }
    };
    let schema = CsvSchema {
        label_column: manifest.label_column.clone(),
        allowed_labels: None,
        fault_onset: None,
    };
    let train =
        load_csv(&train_path, &schema).map_err(|e| io_context(e, "reading", &train_path))?;
    let test_schema = CsvSchema {
        fault_onset: manifest.onset_index,
        ..schema
    };
    let test =
        load_csv(&test_path, &test_schema).map_err(|e| io_context(e, "reading", &test_path))?;
    if test.dim() != train.dim() {
        return Err(Error::Config(format!(
            "train has {} features but test has {}",
            train.dim(),
            test.dim()
        )));
    }
    Ok(Inputs {
        manifest,
        train,
        test,
    })
}

fn known_training_rows(inputs: &Inputs) -> Result<(TabularDataset, Vec<u32>)> {
    let present = inputs.train.classes();
    let known: BTreeSet<u32> = if inputs.manifest.known_classes.is_empty() {
        present.clone()
    } else {
        inputs.manifest.known_classes.iter().copied().collect()
    };
    if let Some(missing) = known.iter().find(|c| !present.contains(c)) {
        return Err(Error::Config(format!(
            "known class {missing} has no training rows"
        )));
    }
    Ok((
        inputs.train.filter_classes(&known),
        known.into_iter().collect(),
    ))
}

fn config_echo(cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn data_summary(train: &TabularDataset, test: &TabularDataset, known: &[u32]) -> DataSummary {
    DataSummary {
        train_fingerprint: train.fingerprint(),
        test_fingerprint: test.fingerprint(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        dim: train.dim(),
        known_classes: known.to_vec(),
        unknown_classes: test
            .classes()
            .into_iter()
            .filter(|c| !known.contains(c))
            .collect(),
    }
}

/// Headline numbers of one run, used for multi-seed summaries.
pub type Headline = BTreeMap<String, f64>;

fn pm_headline(report: &DiagnosisReport) -> Headline {
    let mut h = Headline::new();
    if let Some(pm) = &report.pm {
        if let Some(f) = &pm.fdr {
            h.insert("fdr".into(), f.fdr);
        }
        if let Some(v) = pm.false_alarm_rate {
            h.insert("false_alarm_rate".into(), v);
        }
        if let Some(v) = pm.auroc {
            h.insert("auroc".into(), v);
        }
    }
    for (name, m) in &report.baselines {
        if let Some(f) = &m.fdr {
            h.insert(format!("{name}.fdr"), f.fdr);
        }
        if let Some(v) = m.false_alarm_rate {
            h.insert(format!("{name}.false_alarm_rate"), v);
        }
    }
    h
}

fn osfd_headline(report: &DiagnosisReport) -> Headline {
    let mut h = Headline::new();
    if let Some(m) = &report.osfd {
        h.insert("macro_f1".into(), m.f1.macro_f1);
        h.insert("known_unknown_macro_f1".into(), m.known_unknown_f1.macro_f1);
        h.insert("unknown_f1".into(), m.known_unknown_f1.f1_unknown);
        if let Some(v) = m.unknown_auroc {
            h.insert("unknown_auroc".into(), v);
        }
    }
    h
}

#[derive(Serialize)]
struct Timing {
    fit_seconds: f64,
    total_seconds: f64,
}

fn write_timing(out: &Path, fit: f64, total: f64) -> Result<()> {
    write_json(
        &out.join("timing.json"),
        &Timing {
            fit_seconds: fit,
            total_seconds: total,
        },
    )
}

/// One process-monitoring run into `out`.
pub fn pm_once(cfg: &RunConfig, out: &Path) -> Result<Headline> {
    let start = Instant::now();
    let inputs = load_inputs(cfg)?;
    let model = pm_fit_with(&inputs.train, &cfg.icl, cfg.distance, cfg.quantile)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let result = model
        .detect_batch(inputs.test.values())
        .map_err(|e| e.in_stage("scoring test data"))?;
    let post_onset = inputs.test.post_onset_mask();
    let header = ReportHeader {
        task: "pm".into(),
        seed: cfg.seed,
        config: config_echo(cfg)?,
        data: data_summary(&inputs.train, &inputs.test, &[0]),
        model: model_summary(&model_icl_pm(&model), None),
    };
    let mut report = build_report(
        header,
        RunOutputs::Pm {
            labels: inputs.test.labels(),
            post_onset: &post_onset,
            predictions: &result.predictions,
            distances: &result.distances,
            ot_limit: cfg.ot_limit,
        },
    )?;

    std::fs::create_dir_all(out)?;
    let model_dir = out.join("model");
    model.save(&model_dir)?;
    if cfg.baseline == Some(Baseline::Pca) {
        let std = &model.manifest().standardizer;
        let z_train = std.transform_matrix(inputs.train.values())?;
        let z_test = std.transform_matrix(inputs.test.values())?;
        let pca = fit_pca(z_train.view(), cfg.pca.variance_target, cfg.quantile)
            .map_err(|e| e.in_stage("PCA baseline"))?;
        std::fs::write(model_dir.join("pca.json"), pca.to_json()?)?;
        let t2: Vec<f64> = z_test
            .rows()
            .into_iter()
            .map(|r| pca.t2_statistic(r))
            .collect();
        let spe: Vec<f64> = z_test
            .rows()
            .into_iter()
            .map(|r| pca.spe_statistic(r))
            .collect();
        for (name, stat, theta) in [
            ("pca_t2", &t2, pca.t2_threshold()),
            ("pca_spe", &spe, pca.spe_threshold()),
        ] {
            let alarms: Vec<u8> = stat.iter().map(|&v| (v > theta) as u8).collect();
            let m = pm_metrics(
                inputs.test.labels(),
                &post_onset,
                &alarms,
                stat,
                cfg.ot_limit,
            )?;
            report.baselines.insert(name.into(), m);
        }
    }
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    write_scores_csv(
        &out.join("scores.csv"),
        &report.predictions,
        result.scores.view(),
    )?;
    write_timing(out, fit_seconds, start.elapsed().as_secs_f64())?;
    Ok(pm_headline(&report))
}

struct IclSummary {
    fingerprint: String,
    distance: DistanceKind,
    quantile: f64,
    theta: f64,
    score_dim: usize,
    final_loss: Option<f64>,
}

fn model_icl_pm(m: &PmModel) -> IclSummary {
    IclSummary {
        fingerprint: m.icl().fingerprint(),
        distance: m.rule().kind,
        quantile: m.rule().quantile,
        theta: m.rule().theta,
        score_dim: m.icl().score_dim(),
        final_loss: m.icl().final_loss(),
    }
}

fn model_icl_osfd(m: &OsfdModel) -> IclSummary {
    IclSummary {
        fingerprint: m.icl().fingerprint(),
        distance: m.rule().kind,
        quantile: m.rule().quantile,
        theta: m.rule().theta,
        score_dim: m.icl().score_dim(),
        final_loss: m.icl().final_loss(),
    }
}

fn model_summary(s: &IclSummary, classifier: Option<String>) -> ModelSummary {
    ModelSummary {
        icl_fingerprint: s.fingerprint.clone(),
        classifier_fingerprint: classifier,
        distance: s.distance.name().into(),
        quantile: s.quantile,
        theta: s.theta,
        score_dim: s.score_dim,
        final_loss: s.final_loss,
    }
}

fn osfd_fit_inputs(cfg: &RunConfig, inputs: &Inputs) -> Result<(OsfdModel, Vec<u32>)> {
    let (train, known) = known_training_rows(inputs)?;
    let model = osfd_fit_with(
        &train,
        &cfg.icl,
        &cfg.classifier,
        cfg.distance,
        cfg.quantile,
    )?;
    Ok((model, known))
}

fn osfd_report(
    cfg: &RunConfig,
    inputs: &Inputs,
    model: &OsfdModel,
    known: &[u32],
) -> Result<(DiagnosisReport, OsfdOutput)> {
    let result = model
        .predict_batch(inputs.test.values())
        .map_err(|e| e.in_stage("scoring test data"))?;
    let (train, _) = known_training_rows(inputs)?;
    let header = ReportHeader {
        task: "osfd".into(),
        seed: cfg.seed,
        config: config_echo(cfg)?,
        data: data_summary(&train, &inputs.test, known),
        model: model_summary(
            &model_icl_osfd(model),
            Some(model.classifier().fingerprint()),
        ),
    };
    let report = build_report(
        header,
        RunOutputs::Osfd {
            labels: inputs.test.labels(),
            known,
            predicted: &result.labels,
            distances: &result.distances,
        },
    )?;
    Ok((report, result))
}

/// One open-set diagnosis run into `out`.
pub fn osfd_once(cfg: &RunConfig, out: &Path) -> Result<Headline> {
    let start = Instant::now();
    let inputs = load_inputs(cfg)?;
    let (model, known) = osfd_fit_inputs(cfg, &inputs)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let (report, result) = osfd_report(cfg, &inputs, &model, &known)?;
    std::fs::create_dir_all(out)?;
    model.save(&out.join("model"))?;
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    write_scores_csv(
        &out.join("scores.csv"),
        &report.predictions,
        result.scores.view(),
    )?;
    write_timing(out, fit_seconds, start.elapsed().as_secs_f64())?;
    Ok(osfd_headline(&report))
}

#[derive(Serialize)]
struct Summary {
    task: String,
    seeds: Vec<u64>,
    metrics: BTreeMap<String, MeanStd>,
    runs: BTreeMap<String, Headline>,
}

/// Runs `once` for `cfg.seeds` consecutive seeds. A single seed writes into
/// `out`; several write `out/seed-<s>/` plus `out/summary.json`.
pub fn repeated(
    task: &str,
    cfg: &RunConfig,
    out: &Path,
    once: fn(&RunConfig, &Path) -> Result<Headline>,
) -> Result<()> {
    if cfg.seeds == 1 {
        let h = once(cfg, out)?;
        print_headline(task, cfg.seed, &h);
        return Ok(());
    }
    let seeds: Vec<u64> = (0..cfg.seeds as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let mut runs = BTreeMap::new();
    for &s in &seeds {
        let c = cfg.with_seed(s);
        let h = once(&c, &out.join(format!("seed-{s}")))
            .map_err(|e| e.in_stage(format!("seed {s}")))?;
        print_headline(task, s, &h);
        runs.insert(s.to_string(), h);
    }
    let names: BTreeSet<&String> = runs.values().flat_map(|h| h.keys()).collect();
    let metrics = names
        .into_iter()
        .filter_map(|name| {
            let values: Vec<f64> = runs.values().filter_map(|h| h.get(name).copied()).collect();
            mean_std(&values).map(|m| (name.clone(), m))
        })
        .collect::<BTreeMap<_, _>>();
    for (name, m) in &metrics {
        println!("{name}: {:.4} ± {:.4} (n = {})", m.mean, m.std, m.n);
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            task: task.into(),
            seeds,
            metrics,
            runs,
        },
    )
}

fn print_headline(task: &str, seed: u64, h: &Headline) {
    let parts: Vec<String> = h.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    println!("{task} seed {seed}: {}", parts.join(" "));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationMode {
    Threshold,
    Distance,
}

#[derive(Serialize)]
struct AblationPoint {
    quantile: f64,
    distance: String,
    theta: f64,
    icl_fingerprint: String,
    macro_f1: f64,
    known_unknown_macro_f1: f64,
    unknown_auroc: Option<f64>,
    n_unknown: usize,
    unknown_ids: Vec<usize>,
}

#[derive(Serialize)]
struct Ablation {
    mode: String,
    seed: u64,
    config: serde_json::Value,
    icl_fingerprint: String,
    classifier_fingerprint: String,
    points: Vec<AblationPoint>,
}

/// `ablate`: one trained model, rejection rule varied per point.
pub fn ablate(mode: AblationMode, cfg: &RunConfig, out: &Path) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let (base, known) = osfd_fit_inputs(cfg, &inputs)?;
    let variants: Vec<(DistanceKind, f64)> = match mode {
        AblationMode::Threshold => THRESHOLD_SWEEP.iter().map(|&q| (cfg.distance, q)).collect(),
        AblationMode::Distance => DistanceKind::ALL
            .iter()
            .map(|&k| (k, cfg.quantile))
            .collect(),
    };
    let mut points = Vec::new();
    for (kind, q) in variants {
        let model = base.with_rule(kind, q)?;
        let result = model.predict_batch(inputs.test.values())?;
        let m = osfd_metrics(
            inputs.test.labels(),
            &known,
            &result.labels,
            &result.distances,
        )?;
        let unknown_ids: Vec<usize> = result
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Unknown)
            .map(|(i, _)| i)
            .collect();
        println!(
            "{} q={q}: macro-F1 {:.4}, AUROC {}",
            kind.name(),
            m.f1.macro_f1,
            m.unknown_auroc.map_or("n/a".into(), |a| format!("{a:.4}"))
        );
        points.push(AblationPoint {
            quantile: q,
            distance: kind.name().into(),
            theta: model.rule().theta,
            icl_fingerprint: model.icl().fingerprint(),
            macro_f1: m.f1.macro_f1,
            known_unknown_macro_f1: m.known_unknown_f1.macro_f1,
            unknown_auroc: m.unknown_auroc,
            n_unknown: unknown_ids.len(),
            unknown_ids,
        });
    }
    std::fs::create_dir_all(out)?;
    base.save(&out.join("model"))?;
    write_json(
        &out.join("ablation.json"),
        &Ablation {
            mode: match mode {
                AblationMode::Threshold => "threshold".into(),
                AblationMode::Distance => "distance".into(),
            },
            seed: cfg.seed,
            config: config_echo(cfg)?,
            icl_fingerprint: base.icl().fingerprint(),
            classifier_fingerprint: base.classifier().fingerprint(),
            points,
        },
    )
}

pub fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("out"))
}
