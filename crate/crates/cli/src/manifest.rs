use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

pub const MANIFEST_FORMAT: &str = "nci-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run. Thread count is deliberately absent: it never
/// changes outputs, and leaving it out keeps manifests byte-identical
/// across `--threads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub fps: f64,
    pub params: Command,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub summary: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Tracks every file a command reads or writes.
#[derive(Debug, Default)]
pub struct Io {
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Io {
    pub fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        self.inputs.push(FileHash { path: path.to_path_buf(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
        fs::write(path, bytes).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
        self.outputs.push(FileHash { path: path.to_path_buf(), sha256: sha256_hex(bytes) });
        Ok(())
    }
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT {
            anyhow::bail!("unsupported manifest format '{}'", m.format);
        }
        Ok(m)
    }
}
