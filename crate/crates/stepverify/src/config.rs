//! TOML run configuration. Command-line flags are applied on top of the
//! file values, and the merged result is echoed into reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::error::{Error, Result};
use crate::search::SearchConfig;
use crate::verifier::ScoringConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    /// Prompt style tag, e.g. "cot-step".
    #[serde(default)]
    pub style: Option<String>,
    /// Benchmark mode, e.g. "sc_filter".
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub dataset_path: Option<String>,
    #[serde(default)]
    pub output_path: Option<String>,
    /// Whether to write a per-turn search trace next to the output file.
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Serializable snapshot of the merged configuration for reports.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is serializable")
    }
}
