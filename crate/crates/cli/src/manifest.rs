//! Artifact bookkeeping. Every command funnels its outputs through
//! [`OutDir`] so the run ends with a manifest listing each file with a
//! content hash. Identical runs therefore produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<ManifestEntry>,
}

/// Output directory handle that records a hash for everything written
/// into it. `finish` persists the manifest itself.
pub struct OutDir {
    root: PathBuf,
    command: String,
    entries: Vec<ManifestEntry>,
}

impl OutDir {
    pub fn create(root: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes `bytes` to `rel` under the root and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::runtime(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
        fs::write(&path, bytes)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Records a file some other writer already placed under the root.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path)
            .map_err(|e| CliError::runtime(format!("cannot read back {}: {e}", path.display())))?;
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes `manifest.json`. The manifest lists every artifact except
    /// itself, sorted by path.
    pub fn finish(mut self) -> CliResult<()> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: self.command.clone(),
            artifacts: self.entries.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("cannot encode manifest: {e}")))?;
        let path = self.root.join("manifest.json");
        fs::write(&path, text.as_bytes())
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
