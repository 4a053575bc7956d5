use super::{inverse_xi, ControlEnv, ControlSchedule, ExperimentConfig};
use crate::error::{Error, Result};
use crate::metrics::{xi_perp_squared_from, SpinMoments};
use crate::spin::DensityMatrix;

/// Diagnostics at every segment boundary of an open-loop replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub xi_z_sq: Vec<f64>,
    pub xi_perp_sq: Vec<f64>,
    pub varphi: Vec<f64>,
    pub avg_qfi: Vec<f64>,
    pub purity: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// States at all `n_segments + 1` boundaries under `schedule`.
pub fn replay_states(config: &ExperimentConfig, schedule: &ControlSchedule) -> Result<Vec<DensityMatrix>> {
    let actions = schedule.check_against(config)?;
    let mut env = ControlEnv::new(config)?;
    let (state, _) = env.reset();
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(state.rho);
    for (segment, &a) in actions.iter().enumerate() {
        let next = env
            .propagate(states.last().expect("initial state"), a)
            .map_err(|e| Error::Diverged {
                segment,
                reason: e.to_string(),
            })?;
        states.push(next);
    }
    Ok(states)
}

/// Deterministic open-loop replay of `schedule` without the agent.
pub fn evaluate_schedule(config: &ExperimentConfig, schedule: &ControlSchedule) -> Result<Trajectory> {
    let env = ControlEnv::new(config)?;
    let states = replay_states(config, schedule)?;
    let n = states.len();
    let mut traj = Trajectory {
        times: config.boundary_times(),
        xi_z_sq: Vec::with_capacity(n),
        xi_perp_sq: Vec::with_capacity(n),
        varphi: Vec::with_capacity(n),
        avg_qfi: Vec::with_capacity(n),
        purity: Vec::with_capacity(n),
    };
    for (k, rho) in states.iter().enumerate() {
        let moments = SpinMoments::of(rho, env.ops())?;
        let sample = env.sample(rho, &moments).map_err(|e| Error::Diverged {
            segment: k.saturating_sub(1),
            reason: e.to_string(),
        })?;
        let (xi_z, _) = inverse_xi(&moments, config.n_atoms);
        let (xi_perp, varphi) =
            xi_perp_squared_from(&moments, config.n_atoms).unwrap_or((f64::NAN, f64::NAN));
        traj.xi_z_sq.push(xi_z);
        traj.xi_perp_sq.push(xi_perp);
        traj.varphi.push(varphi);
        traj.avg_qfi.push(sample.avg_qfi);
        traj.purity.push(sample.purity);
    }
    Ok(traj)
}
