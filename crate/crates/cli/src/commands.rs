use std::path::Path;
use std::time::Instant;

use serde_json::json;
use spinsq_core::dqn::AgentCheckpoint;
use spinsq_core::env::{
    best_of, evaluate_schedule, observe, replay_states, run_training_with, BestSummary, ControlEnv,
    ControlSchedule, ExperimentConfig, Trajectory, OBS_DIM,
};
use spinsq_core::metrics::{husimi_grid, SpinMoments};
use spinsq_core::spin::SpinOperators;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::export::{
    husimi_table, read_schedule, record_table, schedule_table, trajectory_table, training_summary_table,
};
use crate::manifest::{RunInfo, RunManifest};
use crate::output::{sha256_hex, OutputDir};

/// Epochs whose trajectories `train` exports: every `interval`-th one and
/// the last.
pub fn export_epochs(n_epochs: usize, interval: usize) -> Vec<usize> {
    let mut epochs: Vec<usize> = (0..n_epochs).step_by(interval.max(1)).collect();
    if n_epochs > 0 && epochs.last() != Some(&(n_epochs - 1)) {
        epochs.push(n_epochs - 1);
    }
    epochs
}

/// Outcome of one independent training run reduced to its best epoch.
#[derive(Debug, Clone)]
pub struct SampleResult {
    pub seed: u64,
    pub best: BestSummary,
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
}

impl SampleResult {
    pub fn final_xi_z_sq(&self) -> f64 {
        *self.trajectory.xi_z_sq.last().expect("nonempty trajectory")
    }

    pub fn min_xi_z_sq(&self) -> f64 {
        self.trajectory.xi_z_sq.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn final_varphi(&self) -> f64 {
        *self.trajectory.varphi.last().expect("nonempty trajectory")
    }
}

/// Trains one agent and replays its best schedule.
pub fn run_sample(experiment: &ExperimentConfig) -> Result<SampleResult> {
    let outcome = run_training_with(experiment, |_| {})?;
    let (schedule, best) = best_of(&outcome.records)?;
    if !best.final_xi_z_sq.is_finite() {
        return Err(CliError::Runtime("every epoch diverged".into()));
    }
    let trajectory = evaluate_schedule(experiment, &schedule)?;
    Ok(SampleResult {
        seed: experiment.master_seed,
        best,
        schedule,
        trajectory,
    })
}

fn probe_observations(experiment: &ExperimentConfig, schedule: &ControlSchedule) -> Result<Vec<Vec<f64>>> {
    let env = ControlEnv::new(experiment)?;
    let (_, first) = env.reset();
    let mut probes = vec![first];
    if let Ok(states) = replay_states(experiment, schedule) {
        let ops = env.ops();
        for k in [states.len() / 2, states.len() - 1] {
            let m = SpinMoments::of(&states[k], ops)?;
            probes.push(observe(&m, ops, k, experiment.n_segments));
        }
    }
    Ok(probes)
}

pub fn train(config: &RunConfig, out_dir: &Path, verbose: bool) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let exp = &config.experiment;
    let interval = config.export.trajectory_interval;
    let clamp = config.export.clamp_xi_z_sq;
    let mut out = OutputDir::create(out_dir)?;

    let outcome = run_training_with(exp, |p| {
        if verbose && (p.epoch % interval == 0 || p.epoch + 1 == p.n_epochs) {
            eprintln!(
                "epoch {:>4}/{}  eps {:.3}  final xi_z^2 {:.4}  best {:.4}  reward {}",
                p.epoch + 1,
                p.n_epochs,
                p.epsilon,
                p.final_xi_z_sq,
                p.best_xi_z_sq,
                p.total_reward
            );
        }
    })?;

    for epoch in export_epochs(exp.n_epochs, interval) {
        let record = &outcome.records[epoch];
        let table = match evaluate_schedule(exp, &record.schedule) {
            Ok(traj) => trajectory_table(&traj, clamp),
            Err(_) => record_table(record, exp, clamp),
        };
        out.write_table(
            &format!("trajectories/epoch_{epoch:04}"),
            &table,
            json!({
                "kind": "training epoch trajectory",
                "epoch": epoch,
                "seed": exp.master_seed,
                "epsilon": record.epsilon,
                "total_reward": record.total_reward,
                "diverged_at": record.diverged_at,
            }),
        )?;
    }

    let (schedule, best) = best_of(&outcome.records)?;
    let best_context = json!({
        "epoch": best.epoch,
        "seed": exp.master_seed,
        "final_xi_z_sq": best.final_xi_z_sq,
        "total_reward": best.total_reward,
    });
    out.write_table(
        "training_summary",
        &training_summary_table(&outcome.records, clamp),
        json!({"kind": "per-epoch training summary", "seed": exp.master_seed}),
    )?;
    out.write_table("best_schedule", &schedule_table(&schedule), best_context.clone())?;
    if let Ok(traj) = evaluate_schedule(exp, &schedule) {
        out.write_table("best_trajectory", &trajectory_table(&traj, clamp), best_context)?;
    }

    let probes = probe_observations(exp, &schedule)?;
    let checkpoint = AgentCheckpoint::capture(&outcome.agent, &probes)?;
    out.write("checkpoint.json", checkpoint.to_canonical_string().as_bytes())?;

    let mut warnings = Vec::new();
    let divergent = outcome.records.iter().filter(|r| r.diverged_at.is_some()).count();
    if divergent > 0 {
        warnings.push(format!("{divergent} epochs diverged"));
    }
    RunInfo {
        command: "train",
        config,
        parameters: json!({}),
        seeds: vec![exp.master_seed],
        failed_samples: 0,
        warnings,
        started,
    }
    .commit(out)
}

/// Experiment config for a constant drive; amplitudes outside the action set
/// replace it.
pub fn baseline_experiment(experiment: &ExperimentConfig, amplitude: f64) -> ExperimentConfig {
    let mut exp = experiment.clone();
    if exp.action_index(amplitude).is_none() {
        exp.action_set = vec![amplitude];
    }
    exp
}

pub fn baseline(config: &RunConfig, amplitude: f64, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    if !amplitude.is_finite() {
        return Err(CliError::Validation(format!("amplitude {amplitude} must be finite")));
    }
    let started = Instant::now();
    let exp = baseline_experiment(&config.experiment, amplitude);
    let schedule = ControlSchedule::constant(&exp, amplitude);
    let traj = evaluate_schedule(&exp, &schedule)?;

    let mut out = OutputDir::create(out_dir)?;
    let context = json!({"kind": "constant-drive baseline", "amplitude": amplitude});
    out.write_table(
        "baseline_trajectory",
        &trajectory_table(&traj, config.export.clamp_xi_z_sq),
        context.clone(),
    )?;
    out.write_table("baseline_schedule", &schedule_table(&schedule), context)?;
    RunInfo {
        command: "baseline",
        config,
        parameters: json!({"amplitude": amplitude}),
        seeds: vec![],
        failed_samples: 0,
        warnings: vec![],
        started,
    }
    .commit(out)
}

/// Boundary index nearest to `t`, which must lie in `[0, t_final]`.
fn boundary_index(experiment: &ExperimentConfig, t: f64) -> Result<usize> {
    let tol = 1e-9 * experiment.t_final;
    if !(t.is_finite() && t >= -tol && t <= experiment.t_final + tol) {
        return Err(CliError::Validation(format!(
            "Husimi time {t} is outside [0, {}]",
            experiment.t_final
        )));
    }
    let k = (t / experiment.segment_duration()).round() as usize;
    Ok(k.min(experiment.n_segments))
}

pub fn replay(config: &RunConfig, schedule_path: &Path, husimi_times: &[f64], out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let started = Instant::now();
    let exp = &config.experiment;
    let (schedule, text) = read_schedule(schedule_path, exp)?;
    let indices = husimi_times
        .iter()
        .map(|&t| boundary_index(exp, t))
        .collect::<Result<Vec<_>>>()?;

    let states = replay_states(exp, &schedule)?;
    let traj = evaluate_schedule(exp, &schedule)?;
    let mut out = OutputDir::create(out_dir)?;
    out.write_table(
        "replay_trajectory",
        &trajectory_table(&traj, config.export.clamp_xi_z_sq),
        json!({"kind": "open-loop replay", "schedule": schedule_path.display().to_string()}),
    )?;

    let ops = SpinOperators::new(exp.n_atoms)?;
    for (&k, &requested) in indices.iter().zip(husimi_times) {
        let grid = husimi_grid(
            &states[k],
            &ops,
            config.export.husimi_theta_points,
            config.export.husimi_phi_points,
        )?;
        out.write_table(
            &format!("husimi/boundary_{k:04}"),
            &husimi_table(&grid),
            json!({
                "kind": "Husimi Q grid",
                "requested_time": requested,
                "time": traj.times[k],
                "boundary_index": k,
            }),
        )?;
    }
    RunInfo {
        command: "replay",
        config,
        parameters: json!({
            "schedule_sha256": sha256_hex(text.as_bytes()),
            "husimi_times": husimi_times,
        }),
        seeds: vec![],
        failed_samples: 0,
        warnings: vec![],
        started,
    }
    .commit(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointReport {
    pub layer_sizes: Vec<usize>,
    pub n_probes: usize,
    /// Whether the file bytes already were the canonical encoding.
    pub file_is_canonical: bool,
}

/// Loads a checkpoint, re-encodes it, and checks that the restored agent
/// reproduces the stored probe Q-values.
pub fn checkpoint_roundtrip(path: &Path, config: Option<&RunConfig>) -> Result<CheckpointReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let ckpt = AgentCheckpoint::parse(&text)?;
    if let Some(c) = config {
        c.validate()?;
        ckpt.expect_shape(OBS_DIM, c.experiment.action_set.len())?;
    }
    let canonical = ckpt.to_canonical_string();
    let again = AgentCheckpoint::parse(&canonical)?.to_canonical_string();
    if again != canonical {
        return Err(CliError::Runtime("checkpoint encoding is not stable under a roundtrip".into()));
    }
    let agent = ckpt.restore()?;
    ckpt.verify_probes(&agent)?;
    Ok(CheckpointReport {
        layer_sizes: ckpt.layer_sizes.clone(),
        n_probes: ckpt.probe_observations.len(),
        file_is_canonical: canonical == text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_exports_twenty_one_epochs() {
        let e = export_epochs(600, 30);
        assert_eq!(e.len(), 21);
        assert_eq!(e[0], 0);
        assert_eq!(e[19], 570);
        assert_eq!(e[20], 599);
        assert_eq!(export_epochs(5, 30), vec![0, 4]);
        assert_eq!(export_epochs(1, 30), vec![0]);
        assert_eq!(export_epochs(61, 30), vec![0, 30, 60]);
    }

    #[test]
    fn husimi_times_map_to_boundaries() {
        let exp = ExperimentConfig::default();
        assert_eq!(boundary_index(&exp, 0.0).unwrap(), 0);
        assert_eq!(boundary_index(&exp, 2.0).unwrap(), 100);
        assert_eq!(boundary_index(&exp, 1.013).unwrap(), 51);
        assert!(boundary_index(&exp, 2.5).is_err());
        assert!(boundary_index(&exp, -0.1).is_err());
    }

    #[test]
    fn baseline_keeps_or_replaces_the_action_set() {
        let exp = ExperimentConfig::default();
        assert_eq!(baseline_experiment(&exp, -2.0).action_set, exp.action_set);
        assert_eq!(baseline_experiment(&exp, 0.7).action_set, vec![0.7]);
    }
}
