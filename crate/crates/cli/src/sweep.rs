use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use spinsq_core::env::{action_preset, ExperimentConfig};

use crate::commands::{run_sample, SampleResult};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::export::{decibels, fmt_value, Table};
use crate::manifest::{RunInfo, RunManifest};
use crate::output::OutputDir;

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of control segments.
    Segments,
    /// Size of the action set, one of the presets.
    Actions,
    /// Number of atoms.
    Size,
    /// Mean thermal occupation of the reservoir.
    Thermal,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Segments => "segments",
            SweepAxis::Actions => "actions",
            SweepAxis::Size => "size",
            SweepAxis::Thermal => "thermal",
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let bad = |msg: &str| CliError::Validation(format!("{} value {value}: {msg}", self.name()));
        let as_count = || -> Result<usize> {
            if value.is_finite() && value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(bad("must be a positive integer"))
            }
        };
        let mut exp = base.clone();
        match self {
            SweepAxis::Segments => exp.n_segments = as_count()?,
            SweepAxis::Actions => {
                exp.action_set = action_preset(as_count()?).ok_or_else(|| bad("action sets exist for 3, 5, 7 and 9 actions"))?
            }
            SweepAxis::Size => {
                let n = as_count()?;
                if n % 2 != 0 {
                    return Err(bad("must be even"));
                }
                exp.n_atoms = n;
            }
            SweepAxis::Thermal => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(bad("must be finite and >= 0"));
                }
                exp.noise.n_th = value;
            }
        }
        exp.validate()?;
        Ok(exp)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "segments" => Ok(SweepAxis::Segments),
            "actions" => Ok(SweepAxis::Actions),
            "size" => Ok(SweepAxis::Size),
            "thermal" => Ok(SweepAxis::Thermal),
            other => Err(format!("unknown axis `{other}` (segments, actions, size, thermal)")),
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean; NaN for fewer than two values.
pub fn sem(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `samples` trainings per configuration on a pool of `workers`
/// threads. Sample `i` uses seed `master_seed + i` for every configuration.
pub fn run_samples(
    configs: &[ExperimentConfig],
    samples: usize,
    workers: usize,
) -> Result<Vec<Vec<Result<SampleResult, String>>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    let tasks: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..samples).map(move |s| (c, s)))
        .collect();
    let flat: Vec<Result<SampleResult, String>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, s)| {
                let exp = ExperimentConfig {
                    master_seed: configs[c].master_seed.wrapping_add(s as u64),
                    ..configs[c].clone()
                };
                run_sample(&exp).map_err(|e| e.to_string())
            })
            .collect()
    });
    let mut grouped: Vec<Vec<_>> = configs.iter().map(|_| Vec::with_capacity(samples)).collect();
    for ((c, _), r) in tasks.into_iter().zip(flat) {
        grouped[c].push(r);
    }
    Ok(grouped)
}

fn value_label(value: f64) -> String {
    format!("{value}")
}

fn curve_table(results: &[&SampleResult]) -> Table {
    let mut table = Table::new(&[
        ("t", "time in units of 1/kappa"),
        ("mean_xi_z_sq", "mean over samples of the best-schedule xi_z_sq"),
        ("sem_xi_z_sq", "standard error of mean_xi_z_sq"),
        ("mean_xi_z_db", "10 log10 of mean_xi_z_sq"),
        ("n_samples", "number of successful samples"),
    ]);
    if let Some(first) = results.first() {
        for (k, &t) in first.trajectory.times.iter().enumerate() {
            let xs: Vec<f64> = results.iter().map(|r| r.trajectory.xi_z_sq[k]).collect();
            let m = mean(&xs);
            table.push(vec![
                fmt_value(t),
                fmt_value(m),
                fmt_value(sem(&xs)),
                fmt_value(decibels(m)),
                xs.len().to_string(),
            ]);
        }
    }
    table
}

pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    samples: usize,
    out_dir: &Path,
    workers: usize,
) -> Result<RunManifest> {
    config.validate()?;
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    if samples == 0 {
        return Err(CliError::Validation("sweep needs at least one sample".into()));
    }
    let started = Instant::now();
    let configs = values
        .iter()
        .map(|&v| axis.apply(&config.experiment, v))
        .collect::<Result<Vec<_>>>()?;
    let results = run_samples(&configs, samples, workers)?;

    let mut out = OutputDir::create(out_dir)?;
    let mut finals = Table::new(&[
        ("value", "swept parameter value"),
        ("sample", "sample index"),
        ("seed", "training seed"),
        ("status", "ok, or the failure message"),
        ("best_epoch", "epoch of the best schedule"),
        ("final_xi_z_sq", "xi_z_sq at t_final of the best schedule"),
        ("final_xi_z_db", "10 log10 of final_xi_z_sq"),
        ("min_xi_z_sq", "smallest xi_z_sq along the best schedule"),
        ("final_varphi", "squeezing angle at t_final of the best schedule"),
    ]);
    let mut summary = Table::new(&[
        ("value", "swept parameter value"),
        ("n_ok", "successful samples"),
        ("n_failed", "failed samples, excluded from the statistics"),
        ("mean_final_xi_z_sq", "mean of final_xi_z_sq"),
        ("sem_final_xi_z_sq", "standard error of mean_final_xi_z_sq"),
        ("median_final_xi_z_sq", "median of final_xi_z_sq"),
        ("median_final_xi_z_db", "10 log10 of median_final_xi_z_sq"),
        ("median_min_xi_z_sq", "median of min_xi_z_sq"),
    ]);
    let mut failed = 0;
    let mut warnings = Vec::new();
    for ((&value, exp), group) in values.iter().zip(&configs).zip(&results) {
        let label = value_label(value);
        let mut ok = Vec::new();
        for (s, r) in group.iter().enumerate() {
            let seed = exp.master_seed.wrapping_add(s as u64);
            match r {
                Ok(r) => {
                    finals.push(vec![
                        label.clone(),
                        s.to_string(),
                        seed.to_string(),
                        "ok".into(),
                        r.best.epoch.to_string(),
                        fmt_value(r.final_xi_z_sq()),
                        fmt_value(decibels(r.final_xi_z_sq())),
                        fmt_value(r.min_xi_z_sq()),
                        fmt_value(r.final_varphi()),
                    ]);
                    ok.push(r);
                }
                Err(msg) => {
                    failed += 1;
                    warnings.push(format!("{axis}={label} sample {s} (seed {seed}) failed: {msg}"));
                    let nan = fmt_value(f64::NAN);
                    finals.push(vec![
                        label.clone(),
                        s.to_string(),
                        seed.to_string(),
                        msg.clone(),
                        String::new(),
                        nan.clone(),
                        nan.clone(),
                        nan.clone(),
                        nan,
                    ]);
                }
            }
        }
        let finals_v: Vec<f64> = ok.iter().map(|r| r.final_xi_z_sq()).collect();
        let mins: Vec<f64> = ok.iter().map(|r| r.min_xi_z_sq()).collect();
        let med = median(&finals_v);
        summary.push(vec![
            label.clone(),
            ok.len().to_string(),
            (group.len() - ok.len()).to_string(),
            fmt_value(mean(&finals_v)),
            fmt_value(sem(&finals_v)),
            fmt_value(med),
            fmt_value(decibels(med)),
            fmt_value(median(&mins)),
        ]);
        out.write_table(
            &format!("curves/{axis}_{label}"),
            &curve_table(&ok),
            json!({"kind": "mean best-of trajectory", "axis": axis.name(), "value": value}),
        )?;
    }
    let context = json!({"axis": axis.name(), "values": values, "samples": samples});
    out.write_table("sweep_finals", &finals, context.clone())?;
    out.write_table("sweep_summary", &summary, context)?;

    let base = config.experiment.master_seed;
    RunInfo {
        command: "sweep",
        config,
        parameters: json!({"axis": axis.name(), "values": values, "samples": samples}),
        seeds: (0..samples as u64).map(|s| base.wrapping_add(s)).collect(),
        failed_samples: failed,
        warnings,
        started,
    }
    .commit(out)
}
