//! Reinforcement-learning environment around the simulator: one episode is
//! the evolution from the coherent spin state over `n_segments` equal
//! segments, one control amplitude per segment.

mod config;
mod evaluate;
mod training;

pub use config::{action_preset, ExperimentConfig, ACTION_PRESETS};
pub use evaluate::{evaluate_schedule, replay_states, Trajectory};
pub use training::{
    best_of, run_training, run_training_with, BestSummary, EpochProgress, TrainingOutcome,
    TrainingRecord,
};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lindblad::{ExactPropagator, IntegrationScheme, Rk4Propagator, POSITIVITY_TOLERANCE};
use crate::metrics::{averaged_qfi_from, xi_z_squared_from, SpinMoments, Spectrum};
use crate::spin::{coherent_spin_state, purity, DensityMatrix, SpinOperators};

/// Length of the observation vector.
pub const OBS_DIM: usize = 10;

const REWARD_IMPROVE: f64 = 10.0;
const REWARD_WORSEN: f64 = -1.0;

/// Open-loop control: one amplitude per equal-length segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub segment_duration: f64,
    pub amplitudes: Vec<f64>,
}

impl ControlSchedule {
    pub fn constant(config: &ExperimentConfig, amplitude: f64) -> Self {
        Self {
            segment_duration: config.segment_duration(),
            amplitudes: vec![amplitude; config.n_segments],
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Checks segment count, duration, and that every amplitude is an allowed action.
    pub fn check_against(&self, config: &ExperimentConfig) -> Result<Vec<usize>> {
        if self.amplitudes.len() != config.n_segments {
            return Err(Error::InvalidArgument(format!(
                "schedule has {} segments, config expects {}",
                self.amplitudes.len(),
                config.n_segments
            )));
        }
        let expected = config.segment_duration();
        if (self.segment_duration - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "segment duration {} differs from t_final / n_segments = {expected}",
                self.segment_duration
            )));
        }
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                config.action_index(a).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "segment {k}: amplitude {a} is not in the action set {:?}",
                        config.action_set
                    ))
                })
            })
            .collect()
    }
}

/// Mutable episode state.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub rho: DensityMatrix,
    pub segment_index: usize,
    /// `1 / xi_z^2` at the previous segment boundary.
    pub inverse_xi_prev: f64,
}

/// Quantities sampled at every segment boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub xi_z_sq: f64,
    pub avg_qfi: f64,
    pub purity: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// `None` when propagation failed and the episode was cut short.
    pub sample: Option<BoundarySample>,
    pub failure: Option<Error>,
}

/// Moment-vector observation (see [`OBS_DIM`]):
/// mean spin over `N/2`, second moments over `(N/2)^2`, anticommutators over
/// `2 (N/2)^2`, and the elapsed fraction of segments.
pub fn observe(moments: &SpinMoments, ops: &SpinOperators, segment_index: usize, n_segments: usize) -> Vec<f64> {
    let j = ops.j();
    let s = &moments.second;
    vec![
        moments.mean[0] / j,
        moments.mean[1] / j,
        moments.mean[2] / j,
        s[0][0] / (j * j),
        s[1][1] / (j * j),
        s[2][2] / (j * j),
        // <{A, B}> = 2 <(AB + BA) / 2>
        s[0][1] / (j * j),
        s[1][2] / (j * j),
        s[2][0] / (j * j),
        segment_index as f64 / n_segments as f64,
    ]
}

/// `1 / xi_z^2`, zero when the mean spin has collapsed.
fn inverse_xi(moments: &SpinMoments, n_atoms: usize) -> (f64, f64) {
    match xi_z_squared_from(moments, n_atoms) {
        Ok(xi) if xi > 0.0 => (xi, 1.0 / xi),
        Ok(xi) => (xi, f64::INFINITY),
        Err(_) => (f64::INFINITY, 0.0),
    }
}

/// Equation-of-motion stepper shared by training and open-loop replay.
#[derive(Debug, Clone)]
enum Stepper {
    Rk4(Rk4Propagator),
    /// One cached `exp(dt L)` per action.
    Exact(Vec<ExactPropagator>),
}

/// The control environment for one configuration.
#[derive(Debug, Clone)]
pub struct ControlEnv {
    config: ExperimentConfig,
    ops: SpinOperators,
    stepper: Stepper,
    initial: DensityMatrix,
    initial_sample: BoundarySample,
}

impl ControlEnv {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let ops = SpinOperators::new(config.n_atoms)?;
        let dt = config.segment_duration();
        let stepper = match config.integrator.scheme {
            IntegrationScheme::FixedStepRk4 => Stepper::Rk4(Rk4Propagator::new(
                &ops,
                &config.noise,
                config.integrator.substeps_per_segment,
            )
            .with_max_step(config.integrator.max_substep)),
            IntegrationScheme::ExactExponential => Stepper::Exact(
                config
                    .action_set
                    .iter()
                    .map(|&a| ExactPropagator::new(&ops, a, dt, &config.noise))
                    .collect::<Result<_>>()?,
            ),
        };
        let initial = coherent_spin_state(&ops, PI / 2.0, 0.0)?;
        let mut env = Self {
            config: config.clone(),
            ops,
            stepper,
            initial_sample: BoundarySample {
                xi_z_sq: 1.0,
                avg_qfi: 0.0,
                purity: 1.0,
            },
            initial: initial.clone(),
        };
        let moments = SpinMoments::of(&initial, &env.ops)?;
        env.initial_sample = env.sample(&initial, &moments)?;
        Ok(env)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn ops(&self) -> &SpinOperators {
        &self.ops
    }

    pub fn initial_sample(&self) -> BoundarySample {
        self.initial_sample
    }

    /// Coherent spin state along +x, segment 0.
    pub fn reset(&self) -> (EnvState, Vec<f64>) {
        let moments = SpinMoments::of(&self.initial, &self.ops).expect("dimensions match");
        let (_, inv) = inverse_xi(&moments, self.config.n_atoms);
        let obs = observe(&moments, &self.ops, 0, self.config.n_segments);
        (
            EnvState {
                rho: self.initial.clone(),
                segment_index: 0,
                inverse_xi_prev: inv,
            },
            obs,
        )
    }

    pub fn observation(&self, state: &EnvState) -> Result<Vec<f64>> {
        let moments = SpinMoments::of(&state.rho, &self.ops)?;
        Ok(observe(&moments, &self.ops, state.segment_index, self.config.n_segments))
    }

    /// Propagates one segment at action `action_index`.
    pub(crate) fn propagate(&mut self, rho: &DensityMatrix, action_index: usize) -> Result<DensityMatrix> {
        let dt = self.config.segment_duration();
        match &mut self.stepper {
            Stepper::Rk4(p) => p.propagate(rho, self.config.action_set[action_index], dt),
            Stepper::Exact(props) => {
                let out = props[action_index].apply(rho)?;
                let mut m = out.into_matrix();
                let d = m.nrows();
                for c in 0..d {
                    for r in c..d {
                        let v = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
                        m[(r, c)] = v;
                        m[(c, r)] = v.conj();
                    }
                }
                let tr = m.trace().re;
                m.unscale_mut(tr);
                Ok(DensityMatrix::from_raw(m))
            }
        }
    }

    /// Diagnostics at a boundary; fails on a positivity violation.
    pub(crate) fn sample(&self, rho: &DensityMatrix, moments: &SpinMoments) -> Result<BoundarySample> {
        let spectrum = Spectrum::of(rho);
        let min = spectrum.min_population();
        if min < -POSITIVITY_TOLERANCE {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let (xi_z_sq, _) = inverse_xi(moments, self.config.n_atoms);
        Ok(BoundarySample {
            xi_z_sq,
            avg_qfi: averaged_qfi_from(&spectrum, &self.ops)?,
            purity: purity(rho),
        })
    }

    /// Applies `action_index` for one segment and scores the change of
    /// `1 / xi_z^2`: +10 when it did not decrease, -1 otherwise.
    pub fn step(&mut self, state: &mut EnvState, action_index: usize) -> Result<StepOutcome> {
        let n_segments = self.config.n_segments;
        if state.segment_index >= n_segments {
            return Err(Error::InvalidArgument("episode already finished".into()));
        }
        if action_index >= self.config.action_set.len() {
            return Err(Error::InvalidArgument(format!(
                "action index {action_index} out of range for {} actions",
                self.config.action_set.len()
            )));
        }
        let propagated = self.propagate(&state.rho, action_index).and_then(|rho| {
            let moments = SpinMoments::of(&rho, &self.ops)?;
            let sample = self.sample(&rho, &moments)?;
            Ok((rho, moments, sample))
        });
        match propagated {
            Ok((rho, moments, sample)) => {
                let (_, inv) = inverse_xi(&moments, self.config.n_atoms);
                let delta = inv - state.inverse_xi_prev;
                let reward = if delta >= 0.0 { REWARD_IMPROVE } else { REWARD_WORSEN };
                state.rho = rho;
                state.segment_index += 1;
                state.inverse_xi_prev = inv;
                Ok(StepOutcome {
                    observation: observe(&moments, &self.ops, state.segment_index, n_segments),
                    reward,
                    done: state.segment_index == n_segments,
                    sample: Some(sample),
                    failure: None,
                })
            }
            Err(e) => {
                let observation = self.observation(state)?;
                Ok(StepOutcome {
                    observation,
                    reward: REWARD_WORSEN,
                    done: true,
                    sample: None,
                    failure: Some(Error::Diverged {
                        segment: state.segment_index,
                        reason: e.to_string(),
                    }),
                })
            }
        }
    }
}
