//! Versioned JSON dump of an agent's learnable state.

use serde::{Deserialize, Serialize};

use super::agent::{DqnAgent, DqnConfig};
use super::network::QNetwork;
use super::optim::AdamW;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "spinsq-dqn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub config: DqnConfig,
    pub online_params: Vec<f64>,
    pub target_params: Vec<f64>,
    pub adam_first_moment: Vec<f64>,
    pub adam_second_moment: Vec<f64>,
    pub adam_step: u64,
    pub epsilon: f64,
    pub train_steps: u64,
    pub env_steps: u64,
    /// Observations and the online Q-values they produced when saved.
    pub probe_observations: Vec<Vec<f64>>,
    pub probe_q_values: Vec<Vec<f64>>,
}

impl AgentCheckpoint {
    pub fn capture(agent: &DqnAgent, probes: &[Vec<f64>]) -> Result<Self> {
        let probe_q_values = probes
            .iter()
            .map(|obs| agent.online.forward(obs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_sizes: agent.online.sizes().to_vec(),
            config: agent.config.clone(),
            online_params: agent.online.params().to_vec(),
            target_params: agent.target.params().to_vec(),
            adam_first_moment: agent.optimizer.first_moment.clone(),
            adam_second_moment: agent.optimizer.second_moment.clone(),
            adam_step: agent.optimizer.step,
            epsilon: agent.epsilon,
            train_steps: agent.train_steps,
            env_steps: agent.env_steps,
            probe_observations: probes.to_vec(),
            probe_q_values,
        })
    }

    /// Canonical text form; saving a loaded checkpoint reproduces it byte for byte.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        // Peek at the header first so version errors are reported as such.
        let header: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed: {e}")))?;
        let format = header.get("format").and_then(|v| v.as_str());
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!(
                "unrecognized format {format:?}, expected {CHECKPOINT_FORMAT:?}"
            )));
        }
        let version = header.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version:?}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let ckpt: Self =
            serde_json::from_value(header).map_err(|e| Error::Checkpoint(format!("malformed: {e}")))?;
        ckpt.check_shapes()?;
        Ok(ckpt)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = QNetwork::zeros(&self.layer_sizes)?.params().len();
        let fields = [
            ("online_params", self.online_params.len()),
            ("target_params", self.target_params.len()),
            ("adam_first_moment", self.adam_first_moment.len()),
            ("adam_second_moment", self.adam_second_moment.len()),
        ];
        for (name, len) in fields {
            if len != n {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint field {name} has {len} entries, layers {:?} need {n}",
                    self.layer_sizes
                )));
            }
        }
        let (obs_dim, n_actions) = (self.layer_sizes[0], *self.layer_sizes.last().unwrap());
        if self.config.layer_sizes(obs_dim, n_actions) != self.layer_sizes {
            return Err(Error::ShapeMismatch(
                "checkpoint hidden layers disagree with its config".into(),
            ));
        }
        if self.probe_observations.len() != self.probe_q_values.len()
            || self.probe_observations.iter().any(|o| o.len() != obs_dim)
            || self.probe_q_values.iter().any(|q| q.len() != n_actions)
        {
            return Err(Error::ShapeMismatch("checkpoint probe shapes are inconsistent".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_actions(&self) -> usize {
        *self.layer_sizes.last().expect("validated layer sizes")
    }

    /// Errors unless the stored network takes `obs_dim` inputs and produces
    /// `n_actions` outputs.
    pub fn expect_shape(&self, obs_dim: usize, n_actions: usize) -> Result<()> {
        if self.obs_dim() != obs_dim || self.n_actions() != n_actions {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint network maps {} observations to {} actions, expected {obs_dim} -> {n_actions}",
                self.obs_dim(),
                self.n_actions()
            )));
        }
        Ok(())
    }

    /// Rebuilds the agent. The replay memory is not persisted and starts empty.
    pub fn restore(&self) -> Result<DqnAgent> {
        self.check_shapes()?;
        let online = QNetwork::from_params(&self.layer_sizes, self.online_params.clone())?;
        let target = QNetwork::from_params(&self.layer_sizes, self.target_params.clone())?;
        let mut agent = DqnAgent::from_parts(self.config.clone(), online, target);
        agent.optimizer = AdamW {
            config: self.config.optimizer,
            first_moment: self.adam_first_moment.clone(),
            second_moment: self.adam_second_moment.clone(),
            step: self.adam_step,
        };
        agent.epsilon = self.epsilon;
        agent.train_steps = self.train_steps;
        agent.env_steps = self.env_steps;
        Ok(agent)
    }

    /// Recomputes the probe Q-values with the restored agent and requires
    /// bitwise agreement.
    pub fn verify_probes(&self, agent: &DqnAgent) -> Result<()> {
        for (i, (obs, stored)) in self
            .probe_observations
            .iter()
            .zip(&self.probe_q_values)
            .enumerate()
        {
            let q = agent.online.forward(obs)?;
            if q.iter().zip(stored).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(Error::Checkpoint(format!(
                    "probe {i}: restored Q-values {q:?} differ from stored {stored:?}"
                )));
            }
        }
        Ok(())
    }
}
