//! `run_manifest.json`: everything needed to reproduce a run from its input
//! files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_file, sha256_hex, write_json};
use crate::config::Config;
use crate::error::Result;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let data = read_file(path)?;
        Ok(Self { path: path.to_path_buf(), bytes: data.len() as u64, sha256: sha256_hex(&data) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: Config,
    pub inputs: Vec<InputFile>,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// Command-specific results (final step, best validation MRR, ...).
    pub outcome: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn start(command: &str, config: &Config, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.trainer.seed,
            config: config.clone(),
            inputs: inputs.iter().map(|p| InputFile::hash(p)).collect::<Result<_>>()?,
            started_at: now(),
            finished_at: None,
            outcome: None,
        })
    }

    pub fn finish(&mut self, outcome: serde_json::Value) {
        self.finished_at = Some(now());
        self.outcome = Some(outcome);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RUN_MANIFEST_FILE), self)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
