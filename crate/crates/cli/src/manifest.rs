use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Context};

pub const FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).at(path, "io")?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One command's record: what went in, what came out, and how to rerun it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub non_converged: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl Step {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let config_sha256 = hex::encode(Sha256::digest(config.to_string().as_bytes()));
        let versions = BTreeMap::from([
            ("newsgravity".to_string(), newsgravity_version().to_string()),
            ("newsgravity-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Self {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            config,
            config_sha256,
            seed,
            versions,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            non_converged: Vec::new(),
            failures: Vec::new(),
            extra: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, out: &Path, name: &str) -> Result<(), CliError> {
        self.outputs.insert(name.to_string(), sha256_file(&out.join(name))?);
        Ok(())
    }
}

fn newsgravity_version() -> &'static str {
    // Both crates share the workspace version.
    env!("CARGO_PKG_VERSION")
}

/// Merges `step` into the directory's manifest under `key`.
pub fn record(out: &Path, key: &str, step: Step) -> Result<PathBuf, CliError> {
    let path = out.join(FILE);
    let mut steps: BTreeMap<String, Step> = match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    steps.insert(key.to_string(), step);
    let text = serde_json::to_string_pretty(&steps).map_err(|e| CliError::input("json", e.to_string()))?;
    fs::write(&path, text + "\n").at(&path, "io")?;
    Ok(path)
}
