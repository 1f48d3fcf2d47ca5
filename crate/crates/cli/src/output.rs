//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use stablehk::io::write_atomic;
use stablehk::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

/// Everything needed to rerun a command and get the same bytes back. No
/// timestamps or thread counts, so the manifest itself is reproducible.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    command: &'a str,
    arguments: &'a BTreeMap<String, String>,
    config_sha256: Option<String>,
    config: Option<serde_json::Value>,
    seed: Option<u64>,
    versions: BTreeMap<&'static str, &'static str>,
    outputs: Vec<OutputEntry>,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes `rel` atomically and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.write_at(&self.path(rel), rel, bytes)
    }

    /// Writes to an explicit path; `label` is the name recorded in the manifest.
    pub fn write_at(&mut self, path: &Path, label: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.files.push(OutputEntry {
            path: label.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn finish(
        mut self,
        command: &str,
        arguments: &BTreeMap<String, String>,
        config: Option<&[u8]>,
        seed: Option<u64>,
    ) -> Result<()> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let versions = BTreeMap::from([
            ("stablehk", stablehk::VERSION),
            ("stablehk-cli", env!("CARGO_PKG_VERSION")),
        ]);
        let m = Manifest {
            manifest_version: 1,
            command,
            arguments,
            config_sha256: config.map(sha256_hex),
            config: config.map(|c| serde_json::from_slice(c).expect("canonical config is JSON")),
            seed,
            versions,
            outputs: std::mem::take(&mut self.files),
        };
        let mut bytes = serde_json::to_vec_pretty(&m)?;
        bytes.push(b'\n');
        write_atomic(&self.root.join("manifest.json"), &bytes)
    }
}
