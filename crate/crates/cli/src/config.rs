use std::path::Path;

use serde::{Deserialize, Serialize};
use spinsq_core::env::ExperimentConfig;
use spinsq_core::Error as CoreError;

use crate::error::{CliError, Result};

/// Export options that do not affect the physics or the training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Write the trajectory of every this many epochs, plus the last epoch.
    pub trajectory_interval: usize,
    /// `xi_z^2` values above this (and divergent samples) are clamped in the
    /// `xi_z_sq_clamped` column.
    pub clamp_xi_z_sq: f64,
    pub husimi_theta_points: usize,
    pub husimi_phi_points: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            trajectory_interval: 30,
            clamp_xi_z_sq: 5.0,
            husimi_theta_points: 61,
            husimi_phi_points: 121,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub export: ExportConfig,
}

fn invalid(path: impl std::fmt::Display, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("invalid configuration at `{path}`: {message}"))
}

impl RunConfig {
    /// Parses JSON text; missing fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path == "." { "<root>".into() } else { path }, e.into_inner())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::read(p, e))?;
                if text.trim().is_empty() {
                    return Ok(Self::default());
                }
                Self::from_json(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate().map_err(|e| match e {
            CoreError::Config { path, message } => invalid(format!("experiment.{path}"), message),
            other => other.into(),
        })?;
        let x = &self.export;
        if x.trajectory_interval == 0 {
            return Err(invalid("export.trajectory_interval", "must be >= 1"));
        }
        if !(x.clamp_xi_z_sq.is_finite() && x.clamp_xi_z_sq > 0.0) {
            return Err(invalid("export.clamp_xi_z_sq", "must be finite and > 0"));
        }
        if x.husimi_theta_points < 2 {
            return Err(invalid("export.husimi_theta_points", "must be >= 2"));
        }
        if x.husimi_phi_points < 2 {
            return Err(invalid("export.husimi_phi_points", "must be >= 2"));
        }
        Ok(())
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
