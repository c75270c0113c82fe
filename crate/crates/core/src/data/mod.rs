//! Tabular process data: the dataset type, CSV and manifest I/O,
//! standardization, class-aware splitting and a synthetic process generator.

mod csvio;
mod dataset;
mod manifest;
mod split;
mod standardize;
pub mod synth;

pub use csvio::{load_csv, write_csv, CsvSchema};
pub use dataset::TabularDataset;
pub use manifest::Manifest;
pub use split::{split, Split, SplitSpec};
pub use standardize::Standardizer;
pub use synth::{synth_generate, CovarianceSpec, FaultKind, FaultSpec, SynthPlan, SynthSpec};
