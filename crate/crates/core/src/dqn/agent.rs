use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, QNetwork};
use super::optim::{clip_grad_norm, AdamW, AdamWConfig};
use super::replay::{ReplayMemory, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    /// Discount factor of future rewards.
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions stored before the first gradient step.
    pub learning_starts: usize,
    /// Hard copy of the online network every this many train steps.
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the epochs over which epsilon decays to `epsilon_end`.
    pub epsilon_decay_fraction: f64,
    pub huber_delta: f64,
    pub grad_clip_norm: f64,
    pub optimizer: AdamWConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            discount: 0.99,
            replay_capacity: 20_000,
            batch_size: 64,
            learning_starts: 500,
            target_sync_interval: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            huber_delta: 1.0,
            grad_clip_norm: 10.0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| Err(Error::config(format!("agent.{field}"), msg));
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return err("hidden_layers", "needs at least one nonzero layer width");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return err("discount", "must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be >= 1");
        }
        if self.replay_capacity < self.batch_size {
            return err("replay_capacity", "must be at least batch_size");
        }
        if self.target_sync_interval == 0 {
            return err("target_sync_interval", "must be >= 1");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.epsilon_start) {
            return err("epsilon_start", "must lie in [0, 1]");
        }
        if !unit(self.epsilon_end) {
            return err("epsilon_end", "must lie in [0, 1]");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return err("epsilon_decay_fraction", "must lie in (0, 1]");
        }
        if !(self.huber_delta > 0.0) {
            return err("huber_delta", "must be > 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return err("grad_clip_norm", "must be > 0");
        }
        let opt = &self.optimizer;
        if !(opt.learning_rate > 0.0) {
            return err("optimizer.learning_rate", "must be > 0");
        }
        if !(unit(opt.beta1) && opt.beta1 < 1.0) {
            return err("optimizer.beta1", "must lie in [0, 1)");
        }
        if !(unit(opt.beta2) && opt.beta2 < 1.0) {
            return err("optimizer.beta2", "must lie in [0, 1)");
        }
        if !(opt.epsilon >= 0.0 && opt.weight_decay >= 0.0) {
            return err("optimizer", "epsilon and weight_decay must be >= 0");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, obs_dim: usize, n_actions: usize) -> Vec<usize> {
        let mut sizes = vec![obs_dim];
        sizes.extend(&self.hidden_layers);
        sizes.push(n_actions);
        sizes
    }
}

/// Exponential decay from `epsilon_start`, reaching `epsilon_end` after
/// `epsilon_decay_fraction * n_epochs` epochs and staying there.
pub fn epsilon_for_epoch(config: &DqnConfig, epoch: usize, n_epochs: usize) -> f64 {
    let (start, end) = (config.epsilon_start, config.epsilon_end);
    if start <= end || end <= 0.0 {
        return if start <= end { start } else { end.max(0.0) };
    }
    let horizon = (config.epsilon_decay_fraction * n_epochs as f64).max(1.0);
    let eps = start * (end / start).powf(epoch as f64 / horizon);
    eps.max(end)
}

/// Epsilon-greedy choice over the network's Q-values.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    obs: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&net.forward(obs)?))
}

/// `r` for terminal transitions, `r + discount * max_a' Q_target(s', a')` otherwise.
pub fn bellman_targets(batch: &[&Transition], target: &QNetwork, discount: f64) -> Result<Vec<f64>> {
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].terminal).collect();
    let mut targets: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    if live.is_empty() {
        return Ok(targets);
    }
    let dim = target.input_dim();
    let mut next = DMatrix::zeros(dim, live.len());
    for (col, &i) in live.iter().enumerate() {
        if batch[i].next_obs.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: batch[i].next_obs.len(),
            });
        }
        next.column_mut(col).copy_from_slice(&batch[i].next_obs);
    }
    let q = target.forward_batch(&next)?;
    for (col, &i) in live.iter().enumerate() {
        let best = q.column(col).max();
        targets[i] += discount * best;
    }
    Ok(targets)
}

/// Online and target networks, optimizer, replay memory, and exploration rate.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: AdamW,
    pub replay: ReplayMemory,
    pub epsilon: f64,
    pub train_steps: u64,
    pub env_steps: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(
        config: DqnConfig,
        obs_dim: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let online = QNetwork::new(&config.layer_sizes(obs_dim, n_actions), rng)?;
        Ok(Self::from_parts(config, online.clone(), online))
    }

    pub(crate) fn from_parts(config: DqnConfig, online: QNetwork, target: QNetwork) -> Self {
        let optimizer = AdamW::new(config.optimizer, online.params().len());
        let replay = ReplayMemory::new(config.replay_capacity);
        let epsilon = config.epsilon_start;
        Self {
            config,
            online,
            target,
            optimizer,
            replay,
            epsilon,
            train_steps: 0,
            env_steps: 0,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<usize> {
        select_action(&self.online, obs, self.epsilon, rng)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.online.forward(obs)?))
    }

    pub fn remember(&mut self, transition: Transition) {
        self.env_steps += 1;
        self.replay.push(transition);
    }

    /// Samples a batch and takes one gradient step once enough transitions
    /// are stored. Returns the loss when a step was taken.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        let needed = self.config.learning_starts.max(self.config.batch_size);
        if self.replay.len() < needed {
            return Ok(None);
        }
        let batch: Vec<Transition> = match self.replay.sample(self.config.batch_size, rng) {
            Some(b) => b.into_iter().cloned().collect(),
            None => return Ok(None),
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        self.train_step(&refs).map(Some)
    }

    /// One AdamW step on the Huber loss between online Q-values of the taken
    /// actions and Bellman targets from the target network.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let targets = bellman_targets(batch, &self.target, self.config.discount)?;
        let dim = self.online.input_dim();
        let mut obs = DMatrix::zeros(dim, batch.len());
        for (col, t) in batch.iter().enumerate() {
            if t.obs.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: t.obs.len(),
                });
            }
            obs.column_mut(col).copy_from_slice(&t.obs);
        }
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let (loss, mut grads) =
            self.online
                .loss_and_gradient(&obs, &actions, &targets, self.config.huber_delta)?;
        clip_grad_norm(&mut grads, self.config.grad_clip_norm);
        self.optimizer.update(self.online.params_mut(), &grads)?;
        if self.online.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network update"));
        }
        self.train_steps += 1;
        if self.train_steps % self.config.target_sync_interval == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net_with_output_bias(bias: &[f64]) -> QNetwork {
        let sizes = [2, 3, bias.len()];
        let mut net = QNetwork::zeros(&sizes).unwrap();
        let n = net.params().len();
        net.params_mut()[n - bias.len()..].copy_from_slice(bias);
        net
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = net_with_output_bias(&[0.1, 0.9, 0.3]);
        assert_eq!(select_action(&net, &[0.0, 0.0], 0.0, &mut rng).unwrap(), 1);
        let net = net_with_output_bias(&[0.5, 0.5, 0.1]);
        assert_eq!(select_action(&net, &[0.0, 0.0], 0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = net_with_output_bias(&[0.0, 1.0, 0.0]);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[select_action(&net, &[0.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    fn transition(reward: f64, terminal: bool) -> Transition {
        Transition {
            obs: vec![0.0, 0.0],
            action: 0,
            reward,
            next_obs: vec![0.0, 0.0],
            terminal,
        }
    }

    #[test]
    fn bellman_target_examples() {
        let target = net_with_output_bias(&[5.0, 2.0]);
        let t = transition(10.0, true);
        assert_eq!(bellman_targets(&[&t], &target, 0.99).unwrap(), vec![10.0]);
        let t = transition(-1.0, false);
        assert_eq!(bellman_targets(&[&t], &target, 0.0).unwrap(), vec![-1.0]);
        let t = transition(10.0, false);
        let y = bellman_targets(&[&t], &target, 0.99).unwrap()[0];
        assert!((y - 14.95).abs() < 1e-12);
    }

    #[test]
    fn epsilon_schedule_reaches_floor_at_half_round() {
        let cfg = DqnConfig::default();
        assert_eq!(epsilon_for_epoch(&cfg, 0, 600), 1.0);
        assert!((epsilon_for_epoch(&cfg, 300, 600) - 0.05).abs() < 1e-12);
        assert_eq!(epsilon_for_epoch(&cfg, 599, 600), 0.05);
        let mid = epsilon_for_epoch(&cfg, 150, 600);
        assert!((mid - 0.05f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = DqnConfig {
            discount: 1.0,
            ..DqnConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "agent.discount"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
