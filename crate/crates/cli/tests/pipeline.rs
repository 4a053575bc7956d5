use std::fs;
use std::path::Path;

use spinsq_cli::export::parse_value;
use spinsq_cli::{baseline, checkpoint_roundtrip, replay, sweep, train, CliError, RunConfig, RunManifest, SweepAxis};

fn small_config() -> RunConfig {
    let mut config = RunConfig::default();
    let exp = &mut config.experiment;
    exp.n_atoms = 6;
    exp.n_segments = 12;
    exp.n_epochs = 40;
    exp.master_seed = 3;
    exp.agent.learning_starts = 64;
    config.export.trajectory_interval = 10;
    config.export.husimi_theta_points = 31;
    config.export.husimi_phi_points = 61;
    config
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| parse_value(v).unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i]).collect()
}

#[test]
fn training_exports_are_reproducible() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let a = train(&config, &dir.path().join("a"), false).unwrap();
    let b = train(&config, &dir.path().join("b"), false).unwrap();
    assert_eq!(a.input_hash, b.input_hash);
    assert_eq!(a.artifacts, b.artifacts);

    let paths: Vec<&str> = a.artifacts.iter().map(|x| x.path.as_str()).collect();
    for epoch in [0, 10, 20, 30, 39] {
        assert!(paths.contains(&format!("trajectories/epoch_{epoch:04}.csv").as_str()));
    }
    for p in ["training_summary.csv", "best_schedule.csv", "best_trajectory.csv", "checkpoint.json"] {
        assert!(paths.contains(&p), "{p} missing");
    }
    let manifest = RunManifest::read(&dir.path().join("a/manifest.json")).unwrap();
    assert_eq!(manifest, a);
    for art in &a.artifacts {
        let bytes = fs::read(dir.path().join("a").join(&art.path)).unwrap();
        assert_eq!(spinsq_cli::output::sha256_hex(&bytes), art.sha256);
    }
}

#[test]
fn replay_reproduces_the_best_trajectory() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train(&config, &run, false).unwrap();
    let out = dir.path().join("replay");
    replay(&config, &run.join("best_schedule.csv"), &[0.0, 2.0], &out).unwrap();

    let (h1, trained) = read_csv(&run.join("best_trajectory.csv"));
    let (h2, replayed) = read_csv(&out.join("replay_trajectory.csv"));
    assert_eq!(h1, h2);
    for name in ["xi_z_sq", "purity", "avg_qfi"] {
        for (x, y) in column(&h1, &trained, name).iter().zip(column(&h2, &replayed, name)) {
            assert!((x - y).abs() <= 1e-9, "{name}: {x} vs {y}");
        }
    }

    // The initial coherent state peaks on the equator at phi = 0.
    let (h, grid) = read_csv(&out.join("husimi/boundary_0000.csv"));
    let q = column(&h, &grid, "q");
    let peak = (0..q.len()).max_by(|&i, &j| q[i].total_cmp(&q[j])).unwrap();
    let theta = column(&h, &grid, "theta")[peak];
    let phi = column(&h, &grid, "phi")[peak];
    assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    assert!(phi.abs() < 1e-9 || (phi - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    assert!(out.join("husimi/boundary_0012.csv").exists());
}

#[test]
fn malformed_schedules_report_the_line() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = String::from("segment_index,t_start,t_end,amplitude\n");
    for k in 0..12 {
        let amp = if k == 4 { "two".to_string() } else { "0".to_string() };
        text.push_str(&format!("{k},{},{},{amp}\n", k as f64 / 6.0, (k + 1) as f64 / 6.0));
    }
    fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    let err = replay(&config, &path, &[], &out).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("line 6"), "{err}");
    assert!(!out.exists());
}

#[test]
fn checkpoints_roundtrip_and_reject_mismatches() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train(&config, &run, false).unwrap();
    let path = run.join("checkpoint.json");
    let report = checkpoint_roundtrip(&path, Some(&config)).unwrap();
    assert!(report.file_is_canonical);
    assert_eq!(report.n_probes, 3);

    let mut five = config.clone();
    five.experiment.action_set = vec![2.0, 1.0, 0.0, -1.0, -2.0];
    let err = checkpoint_roundtrip(&path, Some(&five)).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)), "{err}");

    let text = fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.json");
    fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert_eq!(checkpoint_roundtrip(&cut, None).unwrap_err().exit_code(), 1);
}

#[test]
fn invalid_configs_leave_no_output() {
    let mut config = small_config();
    config.experiment.n_segments = 0;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(train(&config, &out, false).unwrap_err().exit_code(), 1);
    assert_eq!(baseline(&config, -2.0, &out).unwrap_err().exit_code(), 1);
    assert!(!out.exists());

    let err = RunConfig::from_json(r#"{"experiment": {"n_atoms": "many"}}"#).unwrap_err();
    assert!(err.to_string().contains("experiment.n_atoms"), "{err}");
}

#[test]
fn baseline_matches_free_evolution_shape() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("base");
    let m = baseline(&config, -2.0, &out).unwrap();
    assert_eq!(m.command, "baseline");
    let (h, rows) = read_csv(&out.join("baseline_trajectory.csv"));
    assert_eq!(rows.len(), 13);
    assert!((column(&h, &rows, "xi_z_sq")[0] - 1.0).abs() < 1e-12);
}

#[test]
fn sweeps_account_for_every_sample() {
    let mut config = small_config();
    config.experiment.n_epochs = 10;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let m = sweep(&config, SweepAxis::Segments, &[6.0, 12.0], 2, &out, 2).unwrap();
    assert_eq!(m.failed_samples, 0);
    assert_eq!(m.seeds, vec![3, 4]);
    let (h, rows) = read_csv(&out.join("sweep_finals.csv"));
    assert_eq!(rows.len(), 4);
    assert!(column(&h, &rows, "final_xi_z_sq").iter().all(|x| x.is_finite()));
    assert!(out.join("curves/segments_6.csv").exists());
    assert!(out.join("curves/segments_12.csv").exists());

    let again = sweep(&config, SweepAxis::Segments, &[6.0, 12.0], 2, &dir.path().join("again"), 1).unwrap();
    assert_eq!(m.artifacts, again.artifacts);

    assert!(sweep(&config, SweepAxis::Size, &[0.0], 1, &dir.path().join("bad"), 1).is_err());
    assert!(!dir.path().join("bad").exists());
}
