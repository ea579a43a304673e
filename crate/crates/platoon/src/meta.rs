//! Artifact metadata: tool version, seed and configuration hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = concat!("platoon ", env!("CARGO_PKG_VERSION"));

/// SHA-256 of the configuration text, hex encoded.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `# key: value` header lines carried by every CSV artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(seed: Option<u64>, config_text: Option<&str>) -> Self {
        let mut m = Self::default();
        m.push("tool", TOOL);
        m.push("seed", seed.map_or_else(|| "none".to_string(), |s| s.to_string()));
        m.push("config_sha256", config_text.map_or_else(|| "none".to_string(), config_hash));
        m
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_header(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(out, "# {k}: {v}")?;
        }
        Ok(())
    }

    /// Parses the leading `#` lines of `text`.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map_while(|l| l.strip_prefix('#'))
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }

    pub fn to_json(&self) -> serde_json::Map<String, serde_json::Value> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect()
    }
}

/// Writes `bytes` to `path` through a `.partial` sibling renamed on
/// success, so a failed run never leaves a plausible-looking artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::data(e).context(format!("creating {}", dir.display())))?;
    }
    fs::write(&tmp, bytes).map_err(|e| Error::data(e).context(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::data(e).context(format!("renaming to {}", path.display())))
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// JSON sidecar next to `path` (`out.csv` → `out.csv.json`).
pub fn write_sidecar(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    let text = serde_json::to_string_pretty(value).map_err(Error::data)?;
    write_atomic(&path.with_file_name(name), text.as_bytes())
}
