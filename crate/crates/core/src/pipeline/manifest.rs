use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::PipelineError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of_file(path: &Path) -> Result<Self, PipelineError> {
        let bytes = fs::read(path)?;
        Ok(Self {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleVersion {
    pub name: &'static str,
    pub version: &'static str,
}

/// Provenance record written as `manifest.json`. Holds no wall-clock data,
/// so repeated runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub inputs: Vec<InputHash>,
    pub modules: Vec<ModuleVersion>,
    pub method: String,
    pub k: usize,
    pub diameter_km: String,
    pub objective: Option<f64>,
    pub diameter_violations: usize,
    pub test_origins: usize,
    pub in_sample_origins: usize,
    pub skipped_test_origins: usize,
    pub skipped_in_sample_origins: usize,
    pub max_incoherence_mw: f64,
    pub baseline: bool,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn modules() -> Vec<ModuleVersion> {
        let v = env!("CARGO_PKG_VERSION");
        ["core", "bundling", "forecast", "reconcile", "metrics", "pipeline"]
            .into_iter()
            .map(|name| ModuleVersion { name, version: v })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}
