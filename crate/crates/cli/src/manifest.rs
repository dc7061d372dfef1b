//! Run manifests: the exact arguments, resolved configuration and file
//! digests of one command. No timestamps, so reruns reproduce them too.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&data)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; `replay` feeds them back verbatim.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    #[serde(skip)]
    errors: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn collect(&mut self, paths: &[&Path]) -> Vec<FileEntry> {
        let mut out = Vec::new();
        for p in paths {
            match FileEntry::of(p) {
                Ok(e) => out.push(e),
                Err(e) => self.errors.push(format!("{e:#}")),
            }
        }
        out
    }

    pub fn inputs(&mut self, paths: &[&Path]) {
        self.inputs = self.collect(paths);
    }

    pub fn outputs(&mut self, paths: &[&Path]) {
        self.outputs = self.collect(paths);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(e) = self.errors.first() {
            anyhow::bail!("{e}");
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("bad manifest {}", path.display()))
    }
}
