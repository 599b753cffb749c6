//! Run manifests: enough context to reproduce a run bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fsim_core::data::SynthTask;

/// Reproducibility record written next to every run's outputs. The config
/// snapshot plus the data fingerprint pin the run; timestamps and artifact
/// paths are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// Full configuration snapshot as given, including every seed.
    pub config: serde_json::Value,
    /// SHA-256 of the task's canonical binary serialization.
    pub data_fingerprint: String,
    pub started: String,
    pub finished: String,
    /// Logical name to path of every artifact the run produced.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// SHA-256 hex digest of the task's canonical FSIM1 serialization.
pub fn task_fingerprint(task: &SynthTask) -> String {
    let mut bytes = Vec::new();
    fsim_core::io::write_dataset(&mut bytes, task).expect("in-memory write");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}
