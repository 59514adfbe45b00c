use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 over the subcommand, its flags and the bytes of every input.
    pub config_digest: String,
    pub tool_version: String,
    pub rng_seed: Option<u64>,
    pub started: String,
    pub finished: String,
}

/// Wall clock, unless `SOURCE_DATE_EPOCH` pins it for reproducible trees.
fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| DateTime::<Utc>::from_timestamp(s, 0));
    pinned
        .unwrap_or_else(Utc::now)
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Collects inputs of one stage and writes its manifest at the end.
pub(crate) struct StageRecorder {
    subcommand: &'static str,
    hasher: Sha256,
    rng_seed: Option<u64>,
    started: String,
}

impl StageRecorder {
    pub fn new<F: Serialize>(subcommand: &'static str, flags: &F, rng_seed: Option<u64>) -> Result<Self, CliError> {
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update([0]);
        hasher.update(serde_json::to_vec(flags).map_err(|e| CliError::Data(e.to_string()))?);
        Ok(StageRecorder {
            subcommand,
            hasher,
            rng_seed,
            started: timestamp(),
        })
    }

    pub fn input(&mut self, bytes: &[u8]) {
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn finish(self, out: &Path) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            config_digest: hex::encode(self.hasher.finalize()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_seed: self.rng_seed,
            started: self.started,
            finished: timestamp(),
        };
        super::write_json(&out.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
