//! Run manifests: what was run, with which config, and digests of what it wrote.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved config text.
    pub config: String,
    pub seed: u64,
    /// Milliseconds since the Unix epoch.
    pub started_at_ms: u128,
    pub finished_at_ms: u128,
    pub outputs: Vec<OutputDigest>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(dir: &Path, file: &str) -> Result<OutputDigest> {
    let bytes = std::fs::read(dir.join(file))?;
    Ok(OutputDigest { file: file.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
}

impl RunManifest {
    pub fn start(command: &str, config: String, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            started_at_ms: now_ms(),
            finished_at_ms: 0,
            outputs: Vec::new(),
        }
    }

    /// Digests `files` (relative to `dir`) and writes `manifest.json` there.
    pub fn finish(mut self, dir: &Path, files: &[String]) -> Result<Self> {
        if files.iter().any(|f| f == MANIFEST_FILE) {
            return Err(Error::InvalidArgument("the manifest cannot list itself".into()));
        }
        self.outputs = files.iter().map(|f| digest_file(dir, f)).collect::<Result<_>>()?;
        self.finished_at_ms = now_ms();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?)
    }

    /// Files whose current digest differs from the recorded one.
    pub fn stale_outputs(&self, dir: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for o in &self.outputs {
            match digest_file(dir, &o.file) {
                Ok(d) if d == *o => {}
                _ => stale.push(o.file.clone()),
            }
        }
        Ok(stale)
    }
}
