//! Run manifest: what was run, with which config, and what it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, RunConfig};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
    pub config: RunConfig,
}

pub fn file_sha256(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path)?;
    Ok((hex(&Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, base_seed: u64) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: config.hash()?,
            base_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            config: config.clone(),
        })
    }

    /// Record a file already written under `dir`.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let (sha256, bytes) = file_sha256(&dir.join(name))?;
        self.outputs.push(OutputFile { path: name.to_string(), sha256, bytes });
        Ok(())
    }

    /// Write `manifest.json` into `dir` and return its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
