use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Digest of command, config, seed, version and inputs.
    pub run_digest: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub details: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// `<out><suffix>`, e.g. `panel.csv.manifest.json`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub struct Run {
    manifest: RunManifest,
}

impl Run {
    pub fn start(command: &str, config: Value, seed: Option<u64>, inputs: &[&Path]) -> Result<Self, CliError> {
        let inputs = inputs
            .iter()
            .map(|p| file_digest(p))
            .collect::<Result<Vec<_>, _>>()?;
        let version = env!("CARGO_PKG_VERSION").to_string();
        let keyed = serde_json::json!({
            "command": command,
            "config": config,
            "seed": seed,
            "version": version,
            "inputs": inputs.iter().map(|d| &d.sha256).collect::<Vec<_>>(),
        });
        let run_digest = sha256_hex(keyed.to_string().as_bytes());
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config,
                seed,
                version,
                inputs,
                outputs: Vec::new(),
                run_digest,
                started_unix: now(),
                finished_unix: 0.0,
                details: Value::Null,
            },
        })
    }

    pub fn digest(&self) -> &str {
        &self.manifest.run_digest
    }

    /// Writes the manifest next to `out` after recording the output digests.
    pub fn finish(mut self, out: &Path, outputs: &[&Path], details: Value) -> Result<(), CliError> {
        self.manifest.outputs = outputs
            .iter()
            .map(|p| file_digest(p))
            .collect::<Result<Vec<_>, _>>()?;
        self.manifest.details = details;
        self.manifest.finished_unix = now();
        let path = sibling(out, ".manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}
