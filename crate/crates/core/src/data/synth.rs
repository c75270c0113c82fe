//! Synthetic correlated-Gaussian process data with injected faults.
//!
//! Normal rows are drawn as `μ + L·z` with `L` the Cholesky factor of the
//! requested covariance. Fault rows use the same draw and then apply their
//! perturbation from the onset index onward.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::default_names;
use super::{Manifest, TabularDataset};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::linalg::cholesky;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovarianceSpec {
    /// Unit-free block-diagonal correlation: consecutive blocks of
    /// `block_size` features share pairwise correlation `correlation`.
    Block {
        block_size: usize,
        correlation: f64,
        #[serde(default = "one")]
        std: f64,
    },
    /// Latent-factor process `Σ = A·Aᵀ + noise_std²·I`, with the `dim × factors`
    /// loading matrix `A` drawn uniformly from `[-1, 1]` by a generator seeded
    /// with `loading_seed`.
    Factor {
        factors: usize,
        noise_std: f64,
        #[serde(default)]
        loading_seed: u64,
    },
    /// Full covariance matrix, row-major.
    Explicit { matrix: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

impl CovarianceSpec {
    pub fn matrix(&self, dim: usize) -> Result<Array2<f64>> {
        match self {
            CovarianceSpec::Block {
                block_size,
                correlation,
                std,
            } => {
                if *block_size == 0 || !correlation.is_finite() || !(std.is_finite() && *std > 0.0)
                {
                    return Err(Error::config(
                        "block covariance needs block_size ≥ 1, finite correlation and std > 0",
                    ));
                }
                let var = std * std;
                Ok(Array2::from_shape_fn((dim, dim), |(i, j)| {
                    if i == j {
                        var
                    } else if i / block_size == j / block_size {
                        var * correlation
                    } else {
                        0.0
                    }
                }))
            }
            CovarianceSpec::Factor {
                factors,
                noise_std,
                loading_seed,
            } => {
                if !noise_std.is_finite() {
                    return Err(Error::config("factor noise_std must be finite"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*loading_seed);
                let a = Array2::from_shape_fn((dim, *factors), |_| rng.gen_range(-1.0..1.0));
                let mut cov = a.dot(&a.t());
                for i in 0..dim {
                    cov[[i, i]] += noise_std * noise_std;
                }
                Ok(cov)
            }
            CovarianceSpec::Explicit { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(Error::config(format!(
                        "explicit covariance must be {dim}x{dim}"
                    )));
                }
                let m = Array2::from_shape_fn((dim, dim), |(i, j)| matrix[i][j]);
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("explicit covariance has non-finite entries"));
                }
                for i in 0..dim {
                    for j in 0..i {
                        if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * (1.0 + m[[i, j]].abs()) {
                            return Err(Error::config("explicit covariance is not symmetric"));
                        }
                    }
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// Adds `magnitude` standard deviations to each affected feature.
    MeanShift,
    /// Scales each affected feature's deviation from its mean by `magnitude`.
    VarianceScale,
    /// Mixes each affected feature with independent noise of the same
    /// variance: `√(1−m²)·dev + m·σ·w`, `m ∈ [0, 1]`.
    CorrelationBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub label: u32,
    pub kind: FaultKind,
    pub magnitude: f64,
    pub features: Vec<usize>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub covariance: CovarianceSpec,
    /// Feature means; zeros when absent.
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    pub n_normal: usize,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Rows of each fault series before the perturbation starts.
    #[serde(default)]
    pub onset: Option<usize>,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("synthetic dimension must be positive"));
        }
        if let Some(m) = &self.mean {
            if m.len() != self.dim || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("mean must have dim finite entries"));
            }
        }
        let mut labels = BTreeSet::new();
        for f in &self.faults {
            if f.label == 0 {
                return Err(Error::config("fault label 0 is reserved for normal data"));
            }
            if !labels.insert(f.label) {
                return Err(Error::config(format!("fault label {} used twice", f.label)));
            }
            if !f.magnitude.is_finite() {
                return Err(Error::config(format!(
                    "fault {}: magnitude must be finite",
                    f.label
                )));
            }
            if let Some(&bad) = f.features.iter().find(|&&j| j >= self.dim) {
                return Err(Error::config(format!(
                    "fault {}: feature {bad} outside [0, {})",
                    f.label, self.dim
                )));
            }
            match f.kind {
                FaultKind::VarianceScale if f.magnitude < 0.0 => {
                    return Err(Error::config("variance-scale magnitude must be ≥ 0"))
                }
                FaultKind::CorrelationBreak if !(0.0..=1.0).contains(&f.magnitude) => {
                    return Err(Error::config(
                        "correlation-break magnitude must be in [0, 1]",
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Generates the dataset described by `spec`: normal rows first, then each
/// fault series in list order. Deterministic in `spec`.
pub fn synth_generate(spec: &SynthSpec) -> Result<TabularDataset> {
    spec.validate()?;
    let d = spec.dim;
    let cov = spec.covariance.matrix(d)?;
    let factor = cholesky(cov.view()).map_err(|e| {
        Error::config(format!(
            "requested covariance is not positive definite: {e}"
        ))
    })?;
    let mean = spec
        .mean
        .clone()
        .map(Array1::from)
        .unwrap_or_else(|| Array1::zeros(d));
    let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();

    let total = spec.n_normal + spec.faults.iter().map(|f| f.n_samples).sum::<usize>();
    let mut values = Array2::<f64>::zeros((total, d));
    let mut labels = vec![0u32; spec.n_normal];
    labels.reserve(total - spec.n_normal);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = Array1::<f64>::zeros(d);

    let draw = |rng: &mut ChaCha8Rng, z: &mut Array1<f64>| -> Array1<f64> {
        z.mapv_inplace(|_| StandardNormal.sample(rng));
        &mean + &factor.dot(z)
    };

    let mut row = 0;
    for _ in 0..spec.n_normal {
        values.row_mut(row).assign(&draw(&mut rng, &mut z));
        row += 1;
    }
    let onset = spec.onset.unwrap_or(0);
    for fault in &spec.faults {
        for j in 0..fault.n_samples {
            let mut x = draw(&mut rng, &mut z);
            if j >= onset {
                let m = fault.magnitude;
                for &f in &fault.features {
                    match fault.kind {
                        FaultKind::MeanShift => x[f] += m * sd[f],
                        FaultKind::VarianceScale => x[f] = mean[f] + m * (x[f] - mean[f]),
                        FaultKind::CorrelationBreak => {
                            let w: f64 = StandardNormal.sample(&mut rng);
                            x[f] =
                                mean[f] + (1.0 - m * m).sqrt() * (x[f] - mean[f]) + m * sd[f] * w;
                        }
                    }
                }
            }
            values.row_mut(row).assign(&x);
            labels.push(fault.label);
            row += 1;
        }
    }
    TabularDataset::new(values, labels, default_names(d), spec.onset)
}

/// A family of datasets sharing one process model, e.g. `train` and `test`
/// parts. Each part gets its own seed derived from the plan seed and the part name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPlan {
    pub seed: u64,
    pub dim: usize,
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    pub parts: BTreeMap<String, SynthPart>,
    #[serde(default)]
    pub known_classes: Option<Vec<u32>>,
    #[serde(default)]
    pub unknown_classes: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPart {
    pub n_normal: usize,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub onset: Option<usize>,
}

impl SynthPlan {
    pub fn part_seed(&self, name: &str) -> u64 {
        let h = Fingerprint::new().bytes(name.as_bytes()).finish();
        splitmix64(self.seed ^ h)
    }

    pub fn specs(&self) -> Vec<(String, SynthSpec)> {
        self.parts
            .iter()
            .map(|(name, part)| {
                (
                    name.clone(),
                    SynthSpec {
                        dim: self.dim,
                        covariance: self.covariance.clone(),
                        mean: self.mean.clone(),
                        n_normal: part.n_normal,
                        faults: part.faults.clone(),
                        onset: part.onset,
                        seed: self.part_seed(name),
                    },
                )
            })
            .collect()
    }

    /// Known classes default to the labels of the `train` part (normal only
    /// when it has no faults); unknown classes to every other generated label.
    pub fn manifest(&self) -> Manifest {
        let labels_of = |p: &SynthPart| -> BTreeSet<u32> {
            std::iter::once(0)
                .chain(p.faults.iter().map(|f| f.label))
                .collect()
        };
        let all: BTreeSet<u32> = self.parts.values().flat_map(labels_of).collect();
        let known: Vec<u32> = match &self.known_classes {
            Some(k) => k.clone(),
            None => match self.parts.get("train") {
                Some(p) => labels_of(p).into_iter().collect(),
                None => all.iter().copied().collect(),
            },
        };
        let unknown = match &self.unknown_classes {
            Some(u) => u.clone(),
            None => all.iter().copied().filter(|c| !known.contains(c)).collect(),
        };
        let onset_index = self.parts.values().find_map(|p| p.onset);
        Manifest {
            label_column: Some("label".into()),
            known_classes: known,
            unknown_classes: unknown,
            onset_index,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(faults: Vec<FaultSpec>) -> SynthSpec {
        SynthSpec {
            dim: 20,
            covariance: CovarianceSpec::Block {
                block_size: 5,
                correlation: 0.6,
                std: 1.0,
            },
            mean: None,
            n_normal: 200,
            faults,
            onset: None,
            seed: 11,
        }
    }

    fn shift(label: u32, magnitude: f64, n: usize) -> FaultSpec {
        FaultSpec {
            label,
            kind: FaultKind::MeanShift,
            magnitude,
            features: vec![0, 1, 2, 3],
            n_samples: n,
        }
    }

    #[test]
    fn zero_magnitude_shift_matches_normal_path() {
        let with_fault = synth_generate(&base(vec![shift(1, 0.0, 50)])).unwrap();
        let mut spec = base(vec![]);
        spec.n_normal = 250;
        let plain = synth_generate(&spec).unwrap();
        assert_eq!(with_fault.values(), plain.values());
        assert_eq!(&with_fault.labels()[200..], &[1; 50][..]);
    }

    #[test]
    fn six_sigma_shift_lands_on_target() {
        let mut spec = base(vec![shift(1, 6.0, 2000)]);
        spec.n_normal = 0;
        let ds = synth_generate(&spec).unwrap();
        for j in 0..20 {
            let m = ds.values().column(j).mean().unwrap();
            let target = if j < 4 { 6.0 } else { 0.0 };
            assert!((m - target).abs() < 0.2, "feature {j}: {m}");
        }
    }

    #[test]
    fn onset_delays_perturbation() {
        let mut spec = base(vec![shift(1, 100.0, 20)]);
        spec.onset = Some(10);
        let ds = synth_generate(&spec).unwrap();
        let first = ds.row(200)[0];
        let late = ds.row(215)[0];
        assert!(first.abs() < 10.0 && late > 50.0);
        assert_eq!(ds.fault_onset(), Some(10));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(&base(vec![shift(1, 3.0, 10)])).unwrap();
        let b = synth_generate(&base(vec![shift(1, 3.0, 10)])).unwrap();
        assert_eq!(a, b);
        let mut other = base(vec![shift(1, 3.0, 10)]);
        other.seed = 12;
        assert_ne!(synth_generate(&other).unwrap(), a);
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let mut spec = base(vec![]);
        spec.covariance = CovarianceSpec::Block {
            block_size: 5,
            correlation: 1.5,
            std: 1.0,
        };
        assert!(matches!(synth_generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn factor_covariance_is_low_rank_plus_noise() {
        let spec = CovarianceSpec::Factor {
            factors: 3,
            noise_std: 0.2,
            loading_seed: 42,
        };
        let m = spec.matrix(20).unwrap();
        let (vals, _) = crate::linalg::symmetric_eigen(m.view()).unwrap();
        assert!(vals[2] > 1.0);
        assert!((vals[3] - 0.04).abs() < 1e-9);
        assert_eq!(m, spec.matrix(20).unwrap());
        let zero_noise = CovarianceSpec::Factor {
            factors: 3,
            noise_std: 0.0,
            loading_seed: 42,
        };
        let mut s = base(vec![]);
        s.covariance = zero_noise;
        assert!(matches!(synth_generate(&s), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_faults_rejected() {
        let mut f = shift(1, 1.0, 5);
        f.features = vec![25];
        assert!(synth_generate(&base(vec![f])).is_err());
        assert!(synth_generate(&base(vec![shift(0, 1.0, 5)])).is_err());
        assert!(synth_generate(&base(vec![shift(1, f64::INFINITY, 5)])).is_err());
        let mut c = shift(2, 1.5, 5);
        c.kind = FaultKind::CorrelationBreak;
        assert!(synth_generate(&base(vec![c])).is_err());
    }

    #[test]
    fn correlation_break_keeps_variance_and_drops_correlation() {
        let mut spec = base(vec![FaultSpec {
            label: 1,
            kind: FaultKind::CorrelationBreak,
            magnitude: 1.0,
            features: vec![0],
            n_samples: 4000,
        }]);
        spec.n_normal = 0;
        let ds = synth_generate(&spec).unwrap();
        let x0 = ds.values().column(0).to_owned();
        let x1 = ds.values().column(1).to_owned();
        let var0 = x0.var(1.0);
        let cov01 = ((&x0 - x0.mean().unwrap()) * (&x1 - x1.mean().unwrap())).sum() / 3999.0;
        assert!((var0 - 1.0).abs() < 0.1);
        assert!(cov01.abs() < 0.1);
    }

    #[test]
    fn plan_manifest_defaults() {
        let plan: SynthPlan = serde_json::from_str(
            r#"{"seed": 3, "dim": 4,
                "covariance": {"kind": "block", "block_size": 2, "correlation": 0.5},
                "parts": {
                  "train": {"n_normal": 10, "faults": [
                    {"label": 1, "kind": "mean-shift", "magnitude": 4, "features": [0], "n_samples": 5}]},
                  "test": {"n_normal": 5, "onset": 2, "faults": [
                    {"label": 1, "kind": "mean-shift", "magnitude": 4, "features": [0], "n_samples": 5},
                    {"label": 3, "kind": "variance-scale", "magnitude": 3, "features": [2], "n_samples": 5}]}}}"#,
        )
        .unwrap();
        let m = plan.manifest();
        assert_eq!(m.known_classes, vec![0, 1]);
        assert_eq!(m.unknown_classes, vec![3]);
        assert_eq!(m.onset_index, Some(2));
        assert_ne!(plan.part_seed("train"), plan.part_seed("test"));
    }
}
