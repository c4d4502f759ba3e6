use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved settings after applying defaults, config file and flags.
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    /// SHA-256 of the input file, when there is one.
    pub input_digest: Option<String>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value, seed: Option<u64>, input_digest: Option<String>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digest,
            duration_secs: 0.0,
        }
    }

    pub fn finish(&mut self, elapsed: Duration) {
        self.duration_secs = elapsed.as_secs_f64();
    }

    /// Hash of the deterministic part (everything but the duration).
    pub fn config_hash(&self) -> String {
        config_hash(&json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "input_digest": self.input_digest,
        }))
    }

    /// Header comment for result tables.
    pub fn comment(&self) -> String {
        format!("config_hash={}", self.config_hash())
    }

    /// Sidecar path `<out>.manifest.json`.
    pub fn sidecar_path(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_beside(&self, out: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(Self::sidecar_path(out), text + "\n")
    }
}

/// SHA-256 of the compact JSON encoding (object keys are sorted).
pub fn config_hash(value: &Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}
