use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinsq_cli::{
    baseline, checkpoint_roundtrip, replay, sweep, train, workers_from_env, CliError, RunConfig, RunManifest,
    SweepAxis,
};

#[derive(Parser)]
#[command(name = "spinsq", version, about = "Design spin-squeezing pulse schedules with deep Q-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file; defaults reproduce the N = 20, 100-segment setup.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `experiment.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.experiment.master_seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and export trajectories, the best schedule and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a constant-amplitude schedule.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        amplitude: f64,
    },
    /// Independent trainings over a range of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// segments, actions, size or thermal.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values of the axis.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 30)]
        samples: usize,
    },
    /// Replay a schedule CSV open-loop.
    Replay {
        /// Schedule CSV with columns segment_index, t_start, t_end, amplitude.
        schedule: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Comma-separated times at which to export Husimi grids.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        husimi_times: Vec<f64>,
    },
    /// Check that a checkpoint reloads, re-encodes identically and reproduces its Q-values.
    Checkpoint {
        path: PathBuf,
        /// Also check the network shape against this config.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
}

fn report(manifest: &RunManifest, out: &std::path::Path) {
    println!(
        "{}: {} artifacts in {} ({:.1} s), input hash {}",
        manifest.command,
        manifest.artifacts.len(),
        out.display(),
        manifest.wall_seconds,
        manifest.input_hash
    );
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common, out, quiet } => {
            let m = train(&common.load()?, &out, !quiet)?;
            report(&m, &out);
        }
        Command::Baseline { common, out, amplitude } => {
            let m = baseline(&common.load()?, amplitude, &out)?;
            report(&m, &out);
        }
        Command::Sweep {
            common,
            out,
            axis,
            values,
            samples,
        } => {
            let workers = workers_from_env()?;
            let m = sweep(&common.load()?, axis, &values, samples, &out, workers)?;
            report(&m, &out);
        }
        Command::Replay {
            schedule,
            common,
            out,
            husimi_times,
        } => {
            let m = replay(&common.load()?, &schedule, &husimi_times, &out)?;
            report(&m, &out);
        }
        Command::Checkpoint { path, config } => {
            let config = config.map(|p| RunConfig::load(Some(&p))).transpose()?;
            let r = checkpoint_roundtrip(&path, config.as_ref())?;
            println!(
                "checkpoint OK: layers {:?}, {} probes reproduced{}",
                r.layer_sizes,
                r.n_probes,
                if r.file_is_canonical { "" } else { " (file was not in canonical form)" }
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
