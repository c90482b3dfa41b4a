//! Run manifest listing every artifact with its digest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nirbench_core::foundation::to_hex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub dataset: Option<Artifact>,
    pub models: Vec<Artifact>,
    pub reports: Vec<Artifact>,
    pub plots: Vec<Artifact>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn artifact(out: &Path, rel: &str) -> Result<Artifact, CliError> {
    let path = out.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(Artifact {
        path: rel.to_string(),
        sha256: to_hex(&Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

fn listing(out: &Path, dir: &str, exts: &[&str]) -> Result<Vec<Artifact>, CliError> {
    let root = out.join(dir);
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = std::fs::read_dir(&root)
        .map_err(|e| CliError::io(&root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| exts.iter().any(|x| n.ends_with(x)))
        .collect();
    names.sort();
    names.iter().map(|n| artifact(out, &format!("{dir}/{n}"))).collect()
}

impl RunManifest {
    /// Scans the standard layout under `out`.
    pub fn collect(out: &Path, command: &str, config_hash: Option<String>, started_unix: u64) -> Result<Self, CliError> {
        let dataset = if out.join(crate::DATASET_FILE).is_file() {
            Some(artifact(out, crate::DATASET_FILE)?)
        } else {
            None
        };
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            dataset,
            models: listing(out, "models", &[".json", ".csv"])?,
            reports: listing(out, "reports", &[".json", ".csv"])?,
            plots: listing(out, "plots", &[".svg"])?,
            started_unix,
            finished_unix: unix_now(),
        })
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.dataset.iter().chain(&self.models).chain(&self.reports).chain(&self.plots)
    }

    /// Fails if any listed path is missing under `out`.
    pub fn verify(&self, out: &Path) -> Result<(), CliError> {
        for a in self.artifacts() {
            if !out.join(&a.path).is_file() {
                return Err(CliError::Data(format!("manifest references missing file {}", a.path)));
            }
        }
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        self.verify(out)?;
        let path = out.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
