//! Per-stage run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub stage: &'a str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl<'a> Manifest<'a> {
    pub fn new(stage: &'a str, config: &'a RunConfig) -> Self {
        Manifest { stage, version: env!("CARGO_PKG_VERSION"), config, inputs: BTreeMap::new(), outputs: BTreeMap::new(), notes: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes `<out>/manifests/<stage>.json` and returns its path.
    pub fn write(&self) -> Result<PathBuf> {
        let dir = self.config.out.join("manifests");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.json", self.stage));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
