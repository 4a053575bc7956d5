use spinsq_core::env::{evaluate_schedule, ControlSchedule, ExperimentConfig};
use spinsq_core::lindblad::{propagate_exact, NoiseParams};
use spinsq_core::metrics::{xi_z_squared, SpinMoments};
use spinsq_core::spin::{coherent_spin_state, SpinOperators};
use std::f64::consts::PI;

#[test]
fn one_axis_twisting_z_squeezing_matches_closed_form() {
    // For a CSS along x under H = Jz^2 the mean spin shrinks as cos^(N-1)(t)
    // while Var(Jz) = N/4 stays fixed.
    let ops = SpinOperators::new(4).unwrap();
    let rho0 = coherent_spin_state(&ops, PI / 2.0, 0.0).unwrap();
    let rho = propagate_exact(&rho0, 0.0, 0.1, &ops, &NoiseParams::NOISELESS).unwrap();
    let xi = xi_z_squared(&rho, &ops).unwrap();
    assert!((xi - 1.0305061957875872).abs() < 1e-12, "{xi}");

    let m = SpinMoments::of(&rho, &ops).unwrap();
    assert!((m.mean[0] - 2.0 * 0.1f64.cos().powi(3)).abs() < 1e-12);
    assert!((m.second[2][2] - 1.0).abs() < 1e-12);
}

#[test]
fn free_twisting_dips_then_recoheres() {
    let config = ExperimentConfig {
        noise: NoiseParams::NOISELESS,
        ..ExperimentConfig::default()
    };
    let traj = evaluate_schedule(&config, &ControlSchedule::constant(&config, 0.0)).unwrap();
    let (i_min, &min) = traj
        .xi_perp_sq
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    assert!(min < 0.5, "no squeezing dip: {min}");
    assert!(i_min > 0 && i_min < traj.len() - 1);
    assert!(traj.xi_perp_sq[traj.len() - 1] > 5.0 * min);
    assert!(traj.purity.iter().all(|p| (p - 1.0).abs() < 1e-8));

    // Cross-check the final state against one exact exponential over t = 2.
    let ops = SpinOperators::new(20).unwrap();
    let rho0 = coherent_spin_state(&ops, PI / 2.0, 0.0).unwrap();
    let rho = propagate_exact(&rho0, 0.0, 2.0, &ops, &NoiseParams::NOISELESS).unwrap();
    let exact = xi_z_squared(&rho, &ops).unwrap();
    let last = *traj.xi_z_sq.last().unwrap();
    assert!((exact - last).abs() <= 1e-6 * exact, "{exact} vs {last}");
}

#[test]
fn constant_drive_baseline_is_reproducible() {
    let config = ExperimentConfig::default();
    let schedule = ControlSchedule::constant(&config, -2.0);
    let a = evaluate_schedule(&config, &schedule).unwrap();
    let b = evaluate_schedule(&config, &schedule).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 101);
    assert!((a.xi_z_sq[0] - 1.0).abs() < 1e-12);
    assert!(a.purity.iter().all(|&p| p > 0.5 && p <= 1.0 + 1e-12), "{:?}", a.purity.last());
    assert!(*a.xi_z_sq.last().unwrap() < 1.0);
}

#[test]
fn mismatched_schedules_are_rejected() {
    let config = ExperimentConfig::default();
    let mut schedule = ControlSchedule::constant(&config, 2.0);
    schedule.amplitudes[3] = 1.0;
    assert!(evaluate_schedule(&config, &schedule).is_err());
    schedule.amplitudes.truncate(50);
    assert!(evaluate_schedule(&config, &schedule).is_err());
}
