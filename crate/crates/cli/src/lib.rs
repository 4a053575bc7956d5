//! Experiment driver for DQN-designed spin-squeezing pulse schedules:
//! configuration loading, training and sweep orchestration, open-loop
//! replay, checkpoint checks, and plot-ready CSV export.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod manifest;
pub mod output;
pub mod sweep;

pub use commands::{baseline, checkpoint_roundtrip, replay, run_sample, train, SampleResult};
pub use config::{ExportConfig, RunConfig};
pub use error::{CliError, Result};
pub use manifest::RunManifest;
pub use sweep::{sweep, SweepAxis};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "SPINSQ_WORKERS";

/// Worker count from `SPINSQ_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Validation(format!("{WORKERS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
