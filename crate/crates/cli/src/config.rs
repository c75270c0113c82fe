//! Run configuration: defaults, then a JSON file, then command-line flags.
//!
//! The file is a JSON object whose keys are dotted paths into the
//! configuration (`"icl.epochs": 20`); nested objects are flattened to the
//! same paths, so `{"icl": {"epochs": 20}}` is equivalent.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use goofd::classifier::ClassifierConfig;
use goofd::icl::IclConfig;
use goofd::outlier::DistanceKind;
use goofd::pca::DEFAULT_VARIANCE_TARGET;
use goofd::pipeline::DEFAULT_QUANTILE;
use goofd::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSettings {
    pub variance_target: f64,
}

/// Fully resolved settings of one command. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub seeds: usize,
    pub quantile: f64,
    pub distance: DistanceKind,
    pub baseline: Option<Baseline>,
    /// Pre-onset alarm rate above which a fault run is marked over-threshold.
    pub ot_limit: f64,
    pub train: Option<String>,
    pub test: Option<String>,
    pub manifest: Option<String>,
    pub icl: IclConfig,
    pub classifier: ClassifierConfig,
    pub pca: PcaSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            seeds: 1,
            quantile: DEFAULT_QUANTILE,
            distance: DistanceKind::Mahalanobis,
            baseline: None,
            ot_limit: goofd::metrics::DEFAULT_OT_LIMIT,
            train: None,
            test: None,
            manifest: None,
            icl: IclConfig::default(),
            classifier: ClassifierConfig::default(),
            pca: PcaSettings {
                variance_target: DEFAULT_VARIANCE_TARGET,
            },
        }
    }
}

/// Builds a [`RunConfig`] from layered key/value overrides.
pub struct Resolver {
    tree: Value,
    explicit: BTreeSet<String>,
}

impl Resolver {
    pub fn new() -> Self {
        Resolver {
            tree: serde_json::to_value(RunConfig::default()).expect("defaults serialize"),
            explicit: BTreeSet::new(),
        }
    }

    /// Applies every key of a config file. Relative data paths are resolved
    /// against the file's directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        let Value::Object(map) = value else {
            return Err(Error::Config(format!(
                "config {} must be a JSON object",
                path.display()
            )));
        };
        let mut flat = Vec::new();
        flatten("", Value::Object(map), &mut flat);
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for (key, mut value) in flat {
            if matches!(key.as_str(), "train" | "test" | "manifest") {
                if let Value::String(s) = &value {
                    value = Value::String(relative_to(&base, s));
                }
            }
            self.set(&key, value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let mut node = &mut self.tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let Value::Object(map) = node else {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            };
            let Some(child) = map.get_mut(*part) else {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            };
            if i + 1 == parts.len() {
                *child = value;
                self.explicit.insert(key.to_string());
                return Ok(());
            }
            node = child;
        }
        Ok(())
    }

    pub fn set_if(&mut self, key: &str, value: Option<Value>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    /// Final configuration. Component seeds not set explicitly derive from
    /// the global seed.
    pub fn finish(self) -> Result<RunConfig> {
        let mut cfg: RunConfig = serde_json::from_value(self.tree)
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        if !self.explicit.contains("icl.seed") {
            cfg.icl.seed = icl_seed(cfg.seed);
        }
        if !self.explicit.contains("classifier.seed") {
            cfg.classifier.seed = classifier_seed(cfg.seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn icl_seed(seed: u64) -> u64 {
    seed
}

pub fn classifier_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile <= 100.0) {
            return Err(Error::Config(format!(
                "quantile {} outside (0, 100]",
                self.quantile
            )));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ot_limit) {
            return Err(Error::Config(format!(
                "ot_limit {} outside [0, 1]",
                self.ot_limit
            )));
        }
        if !(self.pca.variance_target > 0.0 && self.pca.variance_target <= 1.0) {
            return Err(Error::Config(
                "pca.variance_target must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Same run with another global seed and the component seeds derived from it.
    pub fn with_seed(&self, seed: u64) -> RunConfig {
        let mut c = self.clone();
        let icl_offset = self.icl.seed.wrapping_sub(icl_seed(self.seed));
        let clf_offset = self.classifier.seed ^ classifier_seed(self.seed);
        c.seed = seed;
        c.icl.seed = icl_seed(seed).wrapping_add(icl_offset);
        c.classifier.seed = classifier_seed(seed) ^ clf_offset;
        c
    }

    pub fn train_path(&self) -> Result<PathBuf> {
        self.train
            .as_ref()
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config("no training data: pass --train or set \"train\"".into()))
    }

    pub fn test_path(&self) -> Result<PathBuf> {
        self.test
            .as_ref()
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config("no test data: pass --test or set \"test\"".into()))
    }
}

fn flatten(prefix: &str, value: Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) if !map.is_empty() || prefix.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other)),
    }
}

fn relative_to(base: &Path, s: &str) -> String {
    let p = Path::new(s);
    if p.is_absolute() || base.as_os_str().is_empty() {
        s.to_string()
    } else {
        base.join(p).to_string_lossy().into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = Resolver::new().finish().unwrap();
        assert_eq!(c.quantile, 98.0);
        assert_eq!(c.icl.tau, 0.01);
        assert_eq!(c.classifier.hidden_units, 20);
        assert_eq!(c.icl.seed, icl_seed(0));
    }

    #[test]
    fn dotted_and_nested_keys_agree() {
        let mut a = Resolver::new();
        a.set("icl.epochs", Value::from(7)).unwrap();
        let mut flat = Vec::new();
        flatten("", serde_json::json!({"icl": {"epochs": 7}}), &mut flat);
        let mut b = Resolver::new();
        for (k, v) in flat {
            b.set(&k, v).unwrap();
        }
        assert_eq!(a.finish().unwrap(), b.finish().unwrap());
    }

    #[test]
    fn flags_override_file_values() {
        let mut r = Resolver::new();
        r.set("quantile", Value::from(90.0)).unwrap();
        r.set_if("quantile", Some(Value::from(95.0))).unwrap();
        r.set_if("seed", None).unwrap();
        assert_eq!(r.finish().unwrap().quantile, 95.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Resolver::new().set("icl.nope", Value::from(1)).is_err());
        assert!(Resolver::new().set("quantile.x", Value::from(1)).is_err());
        let mut r = Resolver::new();
        r.set("distance", Value::from("manhattan")).unwrap();
        assert!(matches!(r.finish(), Err(Error::Config(_))));
        let mut r = Resolver::new();
        r.set("quantile", Value::from(0.0)).unwrap();
        assert!(r.finish().is_err());
    }

    #[test]
    fn seeds_derive_from_global_seed_unless_pinned() {
        let mut r = Resolver::new();
        r.set("seed", Value::from(5)).unwrap();
        let c = r.finish().unwrap();
        assert_eq!(c.icl.seed, icl_seed(5));
        assert_eq!(c.classifier.seed, classifier_seed(5));
        let next = c.with_seed(6);
        assert_eq!(next.icl.seed, icl_seed(6));
        assert_eq!(next.classifier.seed, classifier_seed(6));

        let mut r = Resolver::new();
        r.set("icl.seed", Value::from(42)).unwrap();
        assert_eq!(r.finish().unwrap().icl.seed, 42);
    }
}
