use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Provenance record written next to every run's outputs. It is the only
/// artifact carrying a timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: serde_json::Value,
    pub dataset_hash: String,
    pub vocab_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        dataset_hash: String,
        vocab_hash: String,
        seed: u64,
    ) -> Self {
        RunManifest {
            command: command.to_owned(),
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            config,
            dataset_hash,
            vocab_hash,
            seed,
            outputs: Vec::new(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }
}

/// `<artifact>.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
