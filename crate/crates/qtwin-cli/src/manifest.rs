//! Run manifests: every subcommand writes a `<output>.run.json` describing
//! what produced the artifacts. Manifests carry timestamps and are therefore
//! excluded from byte-level reproducibility comparisons; the artifacts
//! themselves contain none.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    /// Hashes of the configs that shaped the run, keyed by role.
    pub config_hashes: BTreeMap<String, String>,
    pub artifacts: Vec<PathBuf>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

pub struct ManifestBuilder {
    command: String,
    master_seed: u64,
    config_hashes: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
    started: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ManifestBuilder {
    pub fn new(command: &str, master_seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            master_seed,
            config_hashes: BTreeMap::new(),
            artifacts: Vec::new(),
            started: now_unix(),
        }
    }

    pub fn config_hash(&mut self, role: &str, hash: String) -> &mut Self {
        self.config_hashes.insert(role.to_string(), hash);
        self
    }

    pub fn artifact(&mut self, path: &Path) -> &mut Self {
        self.artifacts.push(path.to_path_buf());
        self
    }

    /// Writes `<anchor>.run.json` next to the main artifact.
    pub fn write(self, anchor: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: self.master_seed,
            config_hashes: self.config_hashes,
            artifacts: self.artifacts,
            started_unix_s: self.started,
            finished_unix_s: now_unix(),
        };
        let mut os = anchor.as_os_str().to_owned();
        os.push(".run.json");
        let path = PathBuf::from(os);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

/// Stable hash of any serializable config (used for non-qubit configs).
pub fn value_hash<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
