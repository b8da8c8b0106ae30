//! Run configuration file: one JSON object with `model`, `decode`, `sarsft`
//! and `paths` sections. Every field is optional; flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use space_core::sarsft::SarSftConfig;
use space_core::{DecodeConfig, ModelConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub checkpoint: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    pub sarsft: SarSftConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The file at `path`, or all defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"sarsft": {"k": 3}, "paths": {"corpus": "c.jsonl"}}"#).unwrap();
        assert_eq!(c.sarsft.k, 3);
        assert_eq!(c.sarsft.p_ar, SarSftConfig::default().p_ar);
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("c.jsonl")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sarsft": {"pAr": 0.5}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"decode": {"sampling": {"mode": "greedy", "x": 1}}}"#).is_err());
    }

    #[test]
    fn default_round_trips() {
        let text = serde_json::to_string_pretty(&RunConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    }
}
