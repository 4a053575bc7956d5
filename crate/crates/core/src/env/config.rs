use serde::{Deserialize, Serialize};

use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::lindblad::{IntegratorConfig, NoiseParams};

/// Action lists for the control-granularity sweep, largest amplitude 2.
pub const ACTION_PRESETS: [&[f64]; 4] = [
    &[2.0, 0.0, -2.0],
    &[2.0, 1.0, 0.0, -1.0, -2.0],
    &[2.0, 1.34, 0.66, 0.0, -0.66, -1.34, -2.0],
    &[2.0, 1.5, 1.0, 0.5, 0.0, -0.5, -1.0, -1.5, -2.0],
];

pub fn action_preset(count: usize) -> Option<Vec<f64>> {
    ACTION_PRESETS
        .iter()
        .find(|p| p.len() == count)
        .map(|p| p.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_atoms: usize,
    pub t_final: f64,
    pub n_segments: usize,
    pub action_set: Vec<f64>,
    pub noise: NoiseParams,
    pub n_epochs: usize,
    pub master_seed: u64,
    pub integrator: IntegratorConfig,
    pub agent: DqnConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_atoms: 20,
            t_final: 2.0,
            n_segments: 100,
            action_set: vec![2.0, 0.0, -2.0],
            noise: NoiseParams::default(),
            n_epochs: 600,
            master_seed: 0,
            integrator: IntegratorConfig::default(),
            agent: DqnConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::config("n_atoms", "must be >= 1"));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::config("t_final", "must be finite and > 0"));
        }
        if self.n_segments == 0 {
            return Err(Error::config("n_segments", "must be >= 1"));
        }
        if self.n_epochs == 0 {
            return Err(Error::config("n_epochs", "must be >= 1"));
        }
        if self.action_set.is_empty() {
            return Err(Error::config("action_set", "must not be empty"));
        }
        for (i, a) in self.action_set.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::config(format!("action_set[{i}]"), "must be finite"));
            }
            if self.action_set[..i].contains(a) {
                return Err(Error::config(
                    format!("action_set[{i}]"),
                    format!("duplicate amplitude {a}"),
                ));
            }
        }
        self.noise.validate().map_err(|e| prefix(e, "noise"))?;
        self.integrator.validate().map_err(|e| prefix(e, "integrator"))?;
        self.agent.validate()
    }

    pub fn segment_duration(&self) -> f64 {
        self.t_final / self.n_segments as f64
    }

    /// Index of `amplitude` in the action set, matching within 1e-9.
    pub fn action_index(&self, amplitude: f64) -> Option<usize> {
        self.action_set
            .iter()
            .position(|&a| (a - amplitude).abs() <= 1e-9)
    }

    pub fn boundary_times(&self) -> Vec<f64> {
        let dt = self.segment_duration();
        (0..=self.n_segments).map(|k| k as f64 * dt).collect()
    }
}

fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { path, message } => Error::Config {
            path: format!("{section}.{path}"),
            message,
        },
        other => other,
    }
}
