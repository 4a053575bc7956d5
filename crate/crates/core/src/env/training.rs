use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BoundarySample, ControlEnv, ControlSchedule, ExperimentConfig, OBS_DIM};
use crate::dqn::{epsilon_for_epoch, DqnAgent, Transition};
use crate::error::{Error, Result};
use crate::metrics::to_decibels;

// Independent random streams derived from one seed.
const STREAM_INIT: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_REPLAY: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything recorded about one training epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub epoch: usize,
    pub epsilon: f64,
    pub actions: Vec<usize>,
    pub schedule: ControlSchedule,
    /// Samples at the `n_segments + 1` boundaries; NaN after a divergence.
    pub xi_z_sq: Vec<f64>,
    pub avg_qfi: Vec<f64>,
    pub purity: Vec<f64>,
    pub total_reward: f64,
    pub mean_loss: Option<f64>,
    /// Segment at which propagation failed, if it did.
    pub diverged_at: Option<usize>,
}

impl TrainingRecord {
    /// `xi_z^2` at `t_final`; infinite for divergent or collapsed episodes.
    pub fn final_xi_z_sq(&self) -> f64 {
        match self.xi_z_sq.last() {
            Some(&x) if x.is_finite() && self.diverged_at.is_none() => x,
            _ => f64::INFINITY,
        }
    }

    fn push_sample(&mut self, s: &BoundarySample) {
        self.xi_z_sq.push(s.xi_z_sq);
        self.avg_qfi.push(s.avg_qfi);
        self.purity.push(s.purity);
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub config: ExperimentConfig,
    pub records: Vec<TrainingRecord>,
    pub agent: DqnAgent,
}

/// Passed to the progress callback after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochProgress {
    pub epoch: usize,
    pub n_epochs: usize,
    pub final_xi_z_sq: f64,
    pub best_xi_z_sq: f64,
    pub total_reward: f64,
    pub epsilon: f64,
}

pub fn run_training(config: &ExperimentConfig) -> Result<TrainingOutcome> {
    run_training_with(config, |_| {})
}

/// Trains one agent for `n_epochs` episodes. The agent, its replay memory and
/// its exploration schedule persist across epochs; every episode restarts from
/// the coherent spin state.
pub fn run_training_with(
    config: &ExperimentConfig,
    mut on_epoch: impl FnMut(&EpochProgress),
) -> Result<TrainingOutcome> {
    let mut env = ControlEnv::new(config)?;
    let seed = config.master_seed;
    let n_actions = config.action_set.len();
    let mut agent = DqnAgent::new(
        config.agent.clone(),
        OBS_DIM,
        n_actions,
        &mut stream(seed, STREAM_INIT),
    )?;
    let mut explore_rng = stream(seed, STREAM_EXPLORE);
    let mut replay_rng = stream(seed, STREAM_REPLAY);
    let n_samples = config.n_segments + 1;
    let mut records = Vec::with_capacity(config.n_epochs);
    let mut best = f64::INFINITY;

    for epoch in 0..config.n_epochs {
        agent.epsilon = epsilon_for_epoch(&config.agent, epoch, config.n_epochs);
        let mut record = TrainingRecord {
            epoch,
            epsilon: agent.epsilon,
            actions: Vec::with_capacity(config.n_segments),
            schedule: ControlSchedule {
                segment_duration: config.segment_duration(),
                amplitudes: Vec::with_capacity(config.n_segments),
            },
            xi_z_sq: Vec::with_capacity(n_samples),
            avg_qfi: Vec::with_capacity(n_samples),
            purity: Vec::with_capacity(n_samples),
            total_reward: 0.0,
            mean_loss: None,
            diverged_at: None,
        };
        record.push_sample(&env.initial_sample());
        let (mut state, mut obs) = env.reset();
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);

        loop {
            let action = agent.act(&obs, &mut explore_rng)?;
            let segment = state.segment_index;
            let out = env.step(&mut state, action)?;
            record.actions.push(action);
            record.schedule.amplitudes.push(config.action_set[action]);
            record.total_reward += out.reward;
            match &out.sample {
                Some(s) => record.push_sample(s),
                None => record.diverged_at = Some(segment),
            }
            agent.remember(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: out.reward,
                next_obs: out.observation.clone(),
                terminal: out.done,
            });
            if let Some(loss) = agent.learn(&mut replay_rng)? {
                loss_sum += loss;
                loss_count += 1;
            }
            obs = out.observation;
            if out.done {
                break;
            }
        }
        for v in [&mut record.xi_z_sq, &mut record.avg_qfi, &mut record.purity] {
            v.resize(n_samples, f64::NAN);
        }
        if loss_count > 0 {
            record.mean_loss = Some(loss_sum / loss_count as f64);
        }
        let final_xi = record.final_xi_z_sq();
        best = best.min(final_xi);
        on_epoch(&EpochProgress {
            epoch,
            n_epochs: config.n_epochs,
            final_xi_z_sq: final_xi,
            best_xi_z_sq: best,
            total_reward: record.total_reward,
            epsilon: record.epsilon,
        });
        records.push(record);
    }

    Ok(TrainingOutcome {
        config: config.clone(),
        records,
        agent,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSummary {
    pub epoch: usize,
    pub final_xi_z_sq: f64,
    pub final_xi_z_db: f64,
    pub total_reward: f64,
}

/// The epoch with the smallest final `xi_z^2`; the earliest one on ties.
pub fn best_of(records: &[TrainingRecord]) -> Result<(ControlSchedule, BestSummary)> {
    let mut best: Option<&TrainingRecord> = None;
    for r in records {
        if best.is_none_or(|b| r.final_xi_z_sq() < b.final_xi_z_sq()) {
            best = Some(r);
        }
    }
    let r = best.ok_or_else(|| Error::InvalidArgument("no training records".into()))?;
    let final_xi_z_sq = r.final_xi_z_sq();
    Ok((
        r.schedule.clone(),
        BestSummary {
            epoch: r.epoch,
            final_xi_z_sq,
            final_xi_z_db: to_decibels(final_xi_z_sq).unwrap_or(f64::INFINITY),
            total_reward: r.total_reward,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, final_xi: f64) -> TrainingRecord {
        TrainingRecord {
            epoch,
            epsilon: 0.0,
            actions: vec![0],
            schedule: ControlSchedule {
                segment_duration: 2.0,
                amplitudes: vec![epoch as f64],
            },
            xi_z_sq: vec![1.0, final_xi],
            avg_qfi: vec![0.0, 0.0],
            purity: vec![1.0, 1.0],
            total_reward: 0.0,
            mean_loss: None,
            diverged_at: None,
        }
    }

    #[test]
    fn best_of_picks_smallest_final_value() {
        let records = vec![record(0, 5.0), record(1, 0.3), record(2, 0.5)];
        let (schedule, summary) = best_of(&records).unwrap();
        assert_eq!(summary.epoch, 1);
        assert_eq!(schedule.amplitudes, vec![1.0]);

        let (_, single) = best_of(&records[..1]).unwrap();
        assert_eq!(single.epoch, 0);
        assert!(best_of(&[]).is_err());
    }

    #[test]
    fn best_of_breaks_ties_by_epoch_and_skips_divergent() {
        let mut diverged = record(0, 0.1);
        diverged.diverged_at = Some(0);
        let records = vec![diverged, record(1, 0.4), record(2, 0.4)];
        assert_eq!(best_of(&records).unwrap().1.epoch, 1);
    }
}
