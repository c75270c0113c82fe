use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Sidecar description of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub label_column: Option<String>,
    #[serde(default)]
    pub known_classes: Vec<u32>,
    #[serde(default)]
    pub unknown_classes: Vec<u32>,
    #[serde(default)]
    pub onset_index: Option<usize>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            label_column: Some("label".into()),
            known_classes: Vec::new(),
            unknown_classes: Vec::new(),
            onset_index: None,
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
