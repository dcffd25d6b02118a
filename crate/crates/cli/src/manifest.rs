use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use psm_core::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command run, written as `manifest.json` next to its
/// outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_path: config.map(|p| p.display().to_string()),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn inputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        self.inputs = digests(paths)?;
        Ok(self)
    }

    pub fn outputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        self.outputs = digests(paths)?;
        Ok(self)
    }

    pub fn finish(mut self, out_dir: &Path, started: Instant) -> Result<()> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}
