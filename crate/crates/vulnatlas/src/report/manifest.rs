//! Reproducibility manifest.
//!
//! Re-running with identical inputs and config yields an identical manifest
//! except for the wall-clock fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_ms: u128,
    /// Parameter echo for the stage, fully resolved.
    pub params: serde_json::Value,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
    pub master_seed: u64,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn digest_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl RunManifest {
    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_wall_clock(&self) -> RunManifest {
        let mut m = self.clone();
        for s in &mut m.stages {
            s.wall_ms = 0;
        }
        m
    }
}
