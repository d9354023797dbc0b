//! Output directory bookkeeping. Every file goes through [`ArtifactWriter`]
//! so the manifest can list it with its digest.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const OUTPUT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub powermap: String,
    /// Bumped when the output layout changes.
    pub output_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub versions: Versions,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub failed_cells: usize,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<Artifact>,
    started: Instant,
    started_unix: u64,
}

impl ArtifactWriter {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        // A stale manifest would describe files from another run.
        let stale = root.join(MANIFEST_FILE);
        if stale.exists() {
            std::fs::remove_file(&stale).with_context(|| format!("removing {}", stale.display()))?;
        }
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact { path: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(path)
    }

    /// Writes the manifest; call after every other file.
    pub fn finish(mut self, command: &str, config_hash: String, failed_cells: usize) -> Result<RunManifest> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash,
            versions: Versions { powermap: env!("CARGO_PKG_VERSION").to_string(), output_format: OUTPUT_FORMAT },
            started_unix_secs: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            failed_cells,
            artifacts: self.artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.root.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

/// Artifacts whose content no longer matches the manifest.
pub fn verify(root: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(root.join(MANIFEST_FILE))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        match std::fs::read(root.join(&a.path)) {
            Ok(bytes) if sha256_hex(&bytes) == a.sha256 => {}
            _ => bad.push(a.path.clone()),
        }
    }
    Ok(bad)
}
