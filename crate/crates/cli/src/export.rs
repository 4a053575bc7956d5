use std::path::Path;

use serde_json::json;
use spinsq_core::env::{ControlSchedule, ExperimentConfig, TrainingRecord, Trajectory};
use spinsq_core::metrics::HusimiGrid;

use crate::error::{CliError, Result};

/// Formats a value with 12 significant digits; non-finite values as `NaN`,
/// `inf` or `-inf`.
pub fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

pub fn parse_value(s: &str) -> Option<f64> {
    match s.trim() {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// `10 log10(x)`, NaN where undefined.
pub fn decibels(x: f64) -> f64 {
    if x > 0.0 { 10.0 * x.log10() } else { f64::NAN }
}

/// A CSV table with a described header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&'static str, &'static str)]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Runtime(format!("csv encoding failed: {e}"));
        w.write_record(self.columns.iter().map(|c| c.0)).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Runtime(format!("csv encoding failed: {e}")))
    }

    pub fn sidecar(&self, file: &str, context: serde_json::Value) -> Vec<u8> {
        let columns: Vec<_> = self
            .columns
            .iter()
            .map(|(name, description)| json!({"name": name, "description": description}))
            .collect();
        let meta = json!({
            "file": file,
            "rows": self.rows.len(),
            "columns": columns,
            "context": context,
        });
        let mut text = serde_json::to_string_pretty(&meta).expect("json");
        text.push('\n');
        text.into_bytes()
    }
}

const TRAJECTORY_COLUMNS: [(&str, &str); 8] = [
    ("t", "time in units of 1/kappa"),
    ("xi_z_sq", "z-direction squeezing parameter (linear)"),
    ("xi_z_db", "10 log10 of xi_z_sq"),
    ("xi_z_sq_clamped", "xi_z_sq clamped from above; divergent samples set to the clamp"),
    ("xi_perp_sq", "minimal squeezing parameter perpendicular to the mean spin"),
    ("varphi", "angle in [0, pi) of the minimal-variance direction"),
    ("avg_qfi", "quantum Fisher information averaged over Jx, Jy, Jz, normalized by N^2"),
    ("purity", "Tr[rho^2]"),
];

fn clamped(x: f64, clamp: f64) -> f64 {
    if x.is_finite() { x.min(clamp) } else { clamp }
}

fn trajectory_row(t: f64, xi_z: f64, xi_perp: f64, varphi: f64, qfi: f64, purity: f64, clamp: f64) -> Vec<String> {
    vec![
        fmt_value(t),
        fmt_value(xi_z),
        fmt_value(decibels(xi_z)),
        fmt_value(clamped(xi_z, clamp)),
        fmt_value(xi_perp),
        fmt_value(varphi),
        fmt_value(qfi),
        fmt_value(purity),
    ]
}

pub fn trajectory_table(traj: &Trajectory, clamp: f64) -> Table {
    let mut table = Table::new(&TRAJECTORY_COLUMNS);
    for i in 0..traj.len() {
        table.push(trajectory_row(
            traj.times[i],
            traj.xi_z_sq[i],
            traj.xi_perp_sq[i],
            traj.varphi[i],
            traj.avg_qfi[i],
            traj.purity[i],
            clamp,
        ));
    }
    table
}

/// Trajectory of a training epoch whose replay failed: only the recorded
/// columns are available.
pub fn record_table(record: &TrainingRecord, config: &ExperimentConfig, clamp: f64) -> Table {
    let mut table = Table::new(&TRAJECTORY_COLUMNS);
    for (i, t) in config.boundary_times().into_iter().enumerate() {
        table.push(trajectory_row(
            t,
            record.xi_z_sq[i],
            f64::NAN,
            f64::NAN,
            record.avg_qfi[i],
            record.purity[i],
            clamp,
        ));
    }
    table
}

pub fn training_summary_table(records: &[TrainingRecord], clamp: f64) -> Table {
    let mut table = Table::new(&[
        ("epoch", "epoch index"),
        ("epsilon", "exploration rate used in the epoch"),
        ("final_xi_z_sq", "xi_z_sq at t_final; inf for divergent epochs"),
        ("final_xi_z_db", "10 log10 of final_xi_z_sq"),
        ("final_xi_z_sq_clamped", "final_xi_z_sq clamped from above"),
        ("total_reward", "sum of rewards over the episode"),
        ("mean_loss", "mean training loss over the epoch; NaN before learning starts"),
        ("diverged_at", "segment at which propagation failed; empty if it did not"),
    ]);
    for r in records {
        let x = r.final_xi_z_sq();
        table.push(vec![
            r.epoch.to_string(),
            fmt_value(r.epsilon),
            fmt_value(x),
            fmt_value(decibels(x)),
            fmt_value(clamped(x, clamp)),
            fmt_value(r.total_reward),
            fmt_value(r.mean_loss.unwrap_or(f64::NAN)),
            r.diverged_at.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    }
    table
}

const SCHEDULE_HEADER: [&str; 4] = ["segment_index", "t_start", "t_end", "amplitude"];

pub fn schedule_table(schedule: &ControlSchedule) -> Table {
    let mut table = Table::new(&[
        ("segment_index", "segment number"),
        ("t_start", "segment start time"),
        ("t_end", "segment end time"),
        ("amplitude", "control amplitude Omega during the segment"),
    ]);
    let dt = schedule.segment_duration;
    for (k, a) in schedule.amplitudes.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            fmt_value(k as f64 * dt),
            fmt_value((k + 1) as f64 * dt),
            fmt_value(*a),
        ]);
    }
    table
}

/// Parses a schedule CSV and checks it against `config`. Errors name the
/// offending line.
pub fn parse_schedule(text: &str, config: &ExperimentConfig) -> Result<ControlSchedule> {
    let bad = |line: u64, msg: String| CliError::Validation(format!("schedule line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| bad(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    if header != SCHEDULE_HEADER {
        return Err(bad(1, format!("expected header {}", SCHEDULE_HEADER.join(","))));
    }
    let dt = config.segment_duration();
    let mut amplitudes = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            bad(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            parse_value(&record[i])
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("`{}` is not a number in column {}", &record[i], SCHEDULE_HEADER[i])))
        };
        let k = amplitudes.len();
        let index = record[0].trim();
        if index.parse::<usize>().ok() != Some(k) {
            return Err(bad(line, format!("segment_index `{index}`, expected {k}")));
        }
        let (t0, t1) = (field(1)?, field(2)?);
        let tol = 1e-9 * config.t_final.max(1.0);
        if (t0 - k as f64 * dt).abs() > tol || (t1 - (k + 1) as f64 * dt).abs() > tol {
            return Err(bad(
                line,
                format!("segment times [{t0}, {t1}] do not match segment length {dt}"),
            ));
        }
        let a = field(3)?;
        match config.action_index(a) {
            Some(i) => amplitudes.push(config.action_set[i]),
            None => {
                return Err(bad(
                    line,
                    format!("amplitude {a} is not in the action set {:?}", config.action_set),
                ))
            }
        }
    }
    let schedule = ControlSchedule {
        segment_duration: dt,
        amplitudes,
    };
    schedule.check_against(config)?;
    Ok(schedule)
}

pub fn read_schedule(path: &Path, config: &ExperimentConfig) -> Result<(ControlSchedule, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let schedule = parse_schedule(&text, config)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((schedule, text))
}

pub fn husimi_table(grid: &HusimiGrid) -> Table {
    let mut table = Table::new(&[
        ("theta", "polar angle, 0 at the north pole"),
        ("phi", "azimuthal angle"),
        ("q", "Husimi Q function <theta,phi|rho|theta,phi>"),
    ]);
    for (i, theta) in grid.thetas.iter().enumerate() {
        for (j, phi) in grid.phis.iter().enumerate() {
            table.push(vec![fmt_value(*theta), fmt_value(*phi), fmt_value(grid.values[(i, j)])]);
        }
    }
    table
}
