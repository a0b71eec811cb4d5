use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use rnnfc_core::training::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Option<TrainConfig>,
    pub input: PathBuf,
    pub input_sha256: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    /// Starts a manifest for `command` reading `input`, whose bytes are
    /// `contents`.
    pub fn begin(command: &str, input: &Path, contents: &[u8]) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: None,
            input: input.to_path_buf(),
            input_sha256: sha256_hex(contents),
            started_at: timestamp(Utc::now()),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, path: &Path) -> std::io::Result<()> {
        self.finished_at = timestamp(Utc::now());
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(path, body + "\n")
    }
}
