use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{sha256_hex, Artifact, OutputDir};

pub const MANIFEST_FORMAT: &str = "spinsq-run-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Record of one command invocation: what went in, what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
    /// Command-specific inputs besides the config.
    pub parameters: serde_json::Value,
    /// SHA-256 over the command, the canonical config and the parameters.
    pub input_hash: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub failed_samples: usize,
    pub warnings: Vec<String>,
    pub wall_seconds: f64,
}

pub fn input_hash(command: &str, config: &RunConfig, parameters: &serde_json::Value) -> String {
    let text = format!("{command}\n{}\n{parameters}\n", config.to_canonical_json());
    sha256_hex(text.as_bytes())
}

/// Everything a command reports besides its artifacts.
pub(crate) struct RunInfo<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub failed_samples: usize,
    pub warnings: Vec<String>,
    pub started: Instant,
}

impl RunInfo<'_> {
    /// Writes `manifest.json` and keeps the outputs.
    pub fn commit(self, out: OutputDir) -> Result<RunManifest> {
        let manifest = RunManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            command: self.command.into(),
            config: self.config.clone(),
            input_hash: input_hash(self.command, self.config, &self.parameters),
            parameters: self.parameters,
            seeds: self.seeds,
            artifacts: out.artifacts().to_vec(),
            failed_samples: self.failed_samples,
            warnings: self.warnings,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("manifest encoding failed: {e}")))?;
        text.push('\n');
        out.commit(text.as_bytes())?;
        Ok(manifest)
    }
}

impl RunManifest {
    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn artifact(&self, path: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == path)
    }
}
