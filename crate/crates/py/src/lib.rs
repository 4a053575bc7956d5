//! Python bindings: experiment configs, a step-wise control environment,
//! open-loop schedule evaluation and full training runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use spinsq_core::dqn::AgentCheckpoint;
use spinsq_core::env::{
    best_of, evaluate_schedule, run_training, ControlEnv, ControlSchedule, EnvState, ExperimentConfig, Trajectory,
    OBS_DIM,
};
use spinsq_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. }
        | Error::InvalidArgument(_)
        | Error::ShapeMismatch(_)
        | Error::DimensionMismatch { .. }
        | Error::ZeroAtoms
        | Error::Checkpoint(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Experiment configuration. Defaults reproduce the N = 20, 100-segment setup.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Builds a config from JSON; missing fields keep their defaults.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn n_atoms(&self) -> usize {
        self.inner.n_atoms
    }

    #[setter]
    fn set_n_atoms(&mut self, v: usize) {
        self.inner.n_atoms = v;
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[setter]
    fn set_t_final(&mut self, v: f64) {
        self.inner.t_final = v;
    }

    #[getter]
    fn n_segments(&self) -> usize {
        self.inner.n_segments
    }

    #[setter]
    fn set_n_segments(&mut self, v: usize) {
        self.inner.n_segments = v;
    }

    #[getter]
    fn n_epochs(&self) -> usize {
        self.inner.n_epochs
    }

    #[setter]
    fn set_n_epochs(&mut self, v: usize) {
        self.inner.n_epochs = v;
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, v: u64) {
        self.inner.master_seed = v;
    }

    #[getter]
    fn action_set(&self) -> Vec<f64> {
        self.inner.action_set.clone()
    }

    #[setter]
    fn set_action_set(&mut self, v: Vec<f64>) {
        self.inner.action_set = v;
    }

    #[getter]
    fn thermal_occupation(&self) -> f64 {
        self.inner.noise.n_th
    }

    #[setter]
    fn set_thermal_occupation(&mut self, v: f64) {
        self.inner.noise.n_th = v;
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.to_json())
    }
}

/// One episode at a time: `reset()`, then `step(action)` until done.
#[pyclass(name = "Env", unsendable)]
pub struct PyEnv {
    env: ControlEnv,
    state: EnvState,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let env = ControlEnv::new(&config.inner).map_err(to_py)?;
        let (state, _) = env.reset();
        Ok(Self { env, state })
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.env.config().action_set.len()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    #[getter]
    fn segment_index(&self) -> usize {
        self.state.segment_index
    }

    fn reset(&mut self) -> Vec<f64> {
        let (state, obs) = self.env.reset();
        self.state = state;
        obs
    }

    /// Returns `(observation, reward, done, info)`; `info` holds the boundary
    /// diagnostics, or the failure message when propagation broke down.
    fn step<'py>(&mut self, py: Python<'py>, action: usize) -> PyResult<(Vec<f64>, f64, bool, Bound<'py, PyDict>)> {
        let out = self.env.step(&mut self.state, action).map_err(to_py)?;
        let info = PyDict::new(py);
        if let Some(s) = out.sample {
            info.set_item("xi_z_sq", s.xi_z_sq)?;
            info.set_item("avg_qfi", s.avg_qfi)?;
            info.set_item("purity", s.purity)?;
        }
        if let Some(e) = out.failure {
            info.set_item("failure", e.to_string())?;
        }
        Ok((out.observation, out.reward, out.done, info))
    }
}

fn trajectory_dict<'py>(py: Python<'py>, t: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", &t.times)?;
    d.set_item("xi_z_sq", &t.xi_z_sq)?;
    d.set_item("xi_perp_sq", &t.xi_perp_sq)?;
    d.set_item("varphi", &t.varphi)?;
    d.set_item("avg_qfi", &t.avg_qfi)?;
    d.set_item("purity", &t.purity)?;
    Ok(d)
}

/// Diagnostics at every segment boundary of an open-loop schedule.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, config: &PyConfig, amplitudes: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let schedule = ControlSchedule {
        segment_duration: config.inner.segment_duration(),
        amplitudes,
    };
    let traj = py
        .detach(|| evaluate_schedule(&config.inner, &schedule))
        .map_err(to_py)?;
    trajectory_dict(py, &traj)
}

/// Trains one agent. Returns the best schedule, its trajectory, per-epoch
/// final `xi_z^2` and rewards, and the agent checkpoint as JSON.
#[pyfunction]
fn train<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let exp = config.inner.clone();
    let (outcome, schedule, best, traj) = py
        .detach(|| -> spinsq_core::Result<_> {
            let outcome = run_training(&exp)?;
            let (schedule, best) = best_of(&outcome.records)?;
            let traj = evaluate_schedule(&exp, &schedule)?;
            Ok((outcome, schedule, best, traj))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("best_epoch", best.epoch)?;
    d.set_item("best_final_xi_z_sq", best.final_xi_z_sq)?;
    d.set_item("best_schedule", &schedule.amplitudes)?;
    d.set_item("best_trajectory", trajectory_dict(py, &traj)?)?;
    let finals: Vec<f64> = outcome.records.iter().map(|r| r.final_xi_z_sq()).collect();
    let rewards: Vec<f64> = outcome.records.iter().map(|r| r.total_reward).collect();
    d.set_item("final_xi_z_sq", finals)?;
    d.set_item("total_reward", rewards)?;
    let ckpt = AgentCheckpoint::capture(&outcome.agent, &[]).map_err(to_py)?;
    d.set_item("checkpoint", ckpt.to_canonical_string())?;
    Ok(d)
}

#[pymodule]
fn spinsq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("OBS_DIM", OBS_DIM)?;
    Ok(())
}
