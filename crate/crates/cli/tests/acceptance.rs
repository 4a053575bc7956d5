//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Training criteria use `SPINSQ_ACCEPTANCE_SAMPLES` seeds per configuration
//! (default 10); sample `i` of every configuration uses seed `i`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinsq_cli::sweep::{mean, median, run_samples};
use spinsq_cli::{train, workers_from_env, RunConfig, SampleResult};
use spinsq_core::dqn::QNetwork;
use spinsq_core::env::{evaluate_schedule, ControlSchedule, ExperimentConfig};
use spinsq_core::lindblad::{evolve_segment, propagate_exact, IntegratorConfig, NoiseParams};
use spinsq_core::metrics::{qfi, xi_perp_squared_from, xi_z_squared, MeanSpinFrame, SpinMoments};
use spinsq_core::spin::{coherent_spin_state, CMatrix, CVector, DensityMatrix, SpinOperators};

const SEGMENT_TOL: f64 = 1e-8;
const TRAJECTORY_TOL: f64 = 1e-6;
const ALGEBRA_TOL: f64 = 1e-6;
const SCAN_TOL: f64 = 1e-6;
const SCAN_POINTS: usize = 3600;
const GRADIENT_TOL: f64 = 1e-4;
const SQUEEZING_DB: f64 = -4.0;
const SQUEEZING_FRACTION: f64 = 0.8;
const MEDIAN_BAND_DB: (f64, f64) = (-7.0, -4.0);
const BASELINE_AMPLITUDE: f64 = -2.0;
const ANGLE_TOL: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn integrator_oracle() -> Outcome {
    let ops = SpinOperators::new(20).unwrap();
    let rho0 = coherent_spin_state(&ops, FRAC_PI_2, 0.0).unwrap();
    let cfg = IntegratorConfig::default();
    let (mut seg_worst, mut traj_worst) = (0.0f64, 0.0f64);
    for n_th in [0.0, 1.0] {
        let noise = NoiseParams {
            gamma: 0.001,
            gamma_z: 0.001,
            n_th,
        };
        for omega in [-2.0, 0.0, 2.0] {
            let rk = evolve_segment(&rho0, omega, 0.02, &ops, &noise, &cfg).unwrap();
            let exact = propagate_exact(&rho0, omega, 0.02, &ops, &noise).unwrap();
            seg_worst = seg_worst.max(max_abs_diff(rk.matrix(), exact.matrix()));

            let mut rho = rho0.clone();
            for _ in 0..100 {
                rho = evolve_segment(&rho, omega, 0.02, &ops, &noise, &cfg).unwrap();
            }
            let exact = propagate_exact(&rho0, omega, 2.0, &ops, &noise).unwrap();
            traj_worst = traj_worst.max(max_abs_diff(rho.matrix(), exact.matrix()));
        }
    }
    outcome(
        seg_worst <= SEGMENT_TOL && traj_worst <= TRAJECTORY_TOL,
        format!("segment max |diff| {seg_worst:.2e} (<= {SEGMENT_TOL:e}), t = 2 max |diff| {traj_worst:.2e} (<= {TRAJECTORY_TOL:e})"),
    )
}

fn expect(v: f64, want: f64) -> f64 {
    (v - want).abs() / want.abs().max(1.0)
}

fn variance(rho: &DensityMatrix, g: &CMatrix) -> f64 {
    let m = rho.matrix();
    let first = (m * g).trace().re;
    let second = (m * g * g).trace().re;
    second - first * first
}

fn algebra_suite() -> Outcome {
    let mut worst = 0.0f64;
    let i = Complex64::new(0.0, 1.0);
    for n in [1, 4, 20] {
        let ops = SpinOperators::new(n).unwrap();
        let (x, y, z) = (ops.component(0), ops.component(1), ops.component(2));
        let scale = (n as f64).max(1.0);
        for (a, b, c) in [(x, y, z), (y, z, x), (z, x, y)] {
            let comm = a * b - b * a;
            worst = worst.max(max_abs_diff(&comm, &(c * i)) / scale);
        }
        let j = ops.j();
        let casimir = x * x + y * y + z * z;
        let id = CMatrix::identity(ops.dim(), ops.dim()) * Complex64::new(j * (j + 1.0), 0.0);
        worst = worst.max(max_abs_diff(&casimir, &id) / (j * (j + 1.0)));

        let css = coherent_spin_state(&ops, FRAC_PI_2, 0.0).unwrap();
        let m = SpinMoments::of(&css, &ops).unwrap();
        worst = worst.max(expect(m.mean[0], n as f64 / 2.0));
        worst = worst.max(expect(xi_z_squared(&css, &ops).unwrap(), 1.0));
        worst = worst.max(expect(xi_perp_squared_from(&m, n).unwrap().0, 1.0));
        worst = worst.max(expect(qfi(&css, z).unwrap(), n as f64));

        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let psi = CVector::from_fn(ops.dim(), |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let pure = DensityMatrix::pure(&psi).unwrap();
        for g in [x, y, z] {
            worst = worst.max(expect(qfi(&pure, g).unwrap(), 4.0 * variance(&pure, g)));
        }

        if n > 1 {
            let mut ghz = CVector::zeros(ops.dim());
            ghz[0] = Complex64::new(0.5f64.sqrt(), 0.0);
            ghz[ops.dim() - 1] = ghz[0];
            let ghz = DensityMatrix::pure(&ghz).unwrap();
            worst = worst.max(expect(qfi(&ghz, z).unwrap(), (n * n) as f64));
        }
    }
    outcome(worst <= ALGEBRA_TOL, format!("max relative error {worst:.2e} (<= {ALGEBRA_TOL:e})"))
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let psi = CVector::from_fn(dim, |k, _| {
        let w = (-(k as f64) * rng.random_range(0.0..1.5)).exp();
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w
    });
    let noise = CVector::from_fn(dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let w = rng.random_range(0.6..1.0);
    let a = DensityMatrix::pure(&psi).unwrap().into_matrix() * Complex64::new(w, 0.0);
    let b = DensityMatrix::pure(&noise).unwrap().into_matrix() * Complex64::new(1.0 - w, 0.0);
    DensityMatrix::new(a + b).unwrap()
}

fn squeezing_angle_scan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for n in [4, 10, 20] {
        let ops = SpinOperators::new(n).unwrap();
        for _ in 0..50 {
            let rho = random_state(n + 1, &mut rng);
            let m = SpinMoments::of(&rho, &ops).unwrap();
            let (closed, _) = xi_perp_squared_from(&m, n).unwrap();
            let frame = MeanSpinFrame::from_moments(&m).unwrap();
            let norm_sq = m.mean_norm().powi(2);
            let scan = (0..SCAN_POINTS)
                .map(|k| {
                    let v = frame.transverse(PI * k as f64 / SCAN_POINTS as f64);
                    n as f64 * m.quadratic(&v, &v) / norm_sq
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((scan - closed).abs() / closed);
        }
    }
    outcome(
        worst <= SCAN_TOL,
        format!("150 states, max relative gap to {SCAN_POINTS}-point scan {worst:.2e} (<= {SCAN_TOL:e})"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = [10, 16, 16, 3];
    let net = QNetwork::new(&sizes, &mut rng).unwrap();
    let batch = 12;
    let obs = DMatrix::from_fn(10, batch, |_, _| rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..batch).map(|_| rng.random_range(0..3)).collect();
    let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (_, grads) = net.loss_and_gradient(&obs, &actions, &targets, 1.0).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let lp = plus.loss_and_gradient(&obs, &actions, &targets, 1.0).unwrap().0;
        let lm = minus.loss_and_gradient(&obs, &actions, &targets, 1.0).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        if grads[i].abs() > 1e-6 {
            worst = worst.max((numeric - grads[i]).abs() / grads[i].abs().max(numeric.abs()));
        }
    }
    outcome(
        worst <= GRADIENT_TOL,
        format!("{} parameters, max relative error {worst:.2e} (<= {GRADIENT_TOL:e})", net.params().len()),
    )
}

fn determinism() -> Outcome {
    let config = RunConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let a = train(&config, &dir.path().join("a"), false);
    let b = train(&config, &dir.path().join("b"), false);
    match (a, b) {
        (Ok(a), Ok(b)) => outcome(
            a.artifacts == b.artifacts,
            format!("{} artifacts, hashes identical: {}", a.artifacts.len(), a.artifacts == b.artifacts),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("train failed: {e}")),
    }
}

struct Group {
    label: String,
    runs: Vec<SampleResult>,
    failures: Vec<String>,
}

impl Group {
    fn finals(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_xi_z_sq()).collect()
    }

    fn minima(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.min_xi_z_sq()).collect()
    }

    fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn campaign(samples: usize, workers: usize) -> Vec<Group> {
    let base = ExperimentConfig::default();
    let mut specs: Vec<(String, ExperimentConfig)> = vec![("default".into(), base.clone())];
    specs.push((
        "20 segments".into(),
        ExperimentConfig {
            n_segments: 20,
            ..base.clone()
        },
    ));
    for n in [10, 40] {
        specs.push((
            format!("N = {n}"),
            ExperimentConfig {
                n_atoms: n,
                ..base.clone()
            },
        ));
    }
    for n_th in [0.1, 0.5, 1.0] {
        let mut exp = base.clone();
        exp.noise.n_th = n_th;
        specs.push((format!("n_th = {n_th}"), exp));
    }
    let configs: Vec<ExperimentConfig> = specs.iter().map(|(_, c)| c.clone()).collect();
    let results = run_samples(&configs, samples, workers).unwrap();
    specs
        .into_iter()
        .zip(results)
        .map(|((label, _), group)| {
            let mut runs = Vec::new();
            let mut failures = Vec::new();
            for (i, r) in group.into_iter().enumerate() {
                match r {
                    Ok(r) => runs.push(r),
                    Err(e) => failures.push(format!("seed {i}: {e}")),
                }
            }
            Group { label, runs, failures }
        })
        .collect()
}

fn find<'a>(groups: &'a [Group], label: &str) -> &'a Group {
    groups.iter().find(|g| g.label == label).unwrap()
}

fn fmt_db(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{:.2}", db(*x))).collect::<Vec<_>>().join(" ")
}

fn central_claim(default: &Group, baseline_final: f64) -> Outcome {
    let finals = default.finals();
    let n = finals.len();
    let squeezed = finals.iter().filter(|&&x| db(x) <= SQUEEZING_DB).count();
    let beat = finals.iter().filter(|&&x| x < baseline_final).count();
    let med = db(median(&finals));
    let fraction = squeezed as f64 / n.max(1) as f64;
    let pass = default.complete()
        && n > 0
        && fraction >= SQUEEZING_FRACTION
        && (MEDIAN_BAND_DB.0..=MEDIAN_BAND_DB.1).contains(&med)
        && beat == n;
    outcome(
        pass,
        format!(
            "{squeezed}/{n} runs <= {SQUEEZING_DB} dB, median {med:.2} dB in [{}, {}], {beat}/{n} beat the {BASELINE_AMPLITUDE} baseline ({:.2} dB), failed runs {}; finals [{}]",
            MEDIAN_BAND_DB.0,
            MEDIAN_BAND_DB.1,
            db(baseline_final),
            default.failures.len(),
            fmt_db(&finals)
        ),
    )
}

fn segment_ordering(fine: &Group, coarse: &Group) -> Outcome {
    let (a, b) = (mean(&fine.finals()), mean(&coarse.finals()));
    outcome(
        fine.complete() && coarse.complete() && a <= b,
        format!("mean final xi_z^2: 100 segments {a:.4} ({:.2} dB), 20 segments {b:.4} ({:.2} dB)", db(a), db(b)),
    )
}

fn size_ordering(groups: &[&Group]) -> Outcome {
    let medians: Vec<f64> = groups.iter().map(|g| median(&g.minima())).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let labels: Vec<String> = groups
        .iter()
        .zip(&medians)
        .map(|(g, m)| format!("{} {m:.4}", g.label))
        .collect();
    outcome(
        groups.iter().all(|g| g.complete()) && decreasing,
        format!("median minimum xi_z^2: {}", labels.join(", ")),
    )
}

fn thermal_ordering(groups: &[&Group]) -> Outcome {
    let medians: Vec<f64> = groups.iter().map(|g| median(&g.finals())).collect();
    let nondecreasing = medians.windows(2).all(|w| w[1] >= w[0]);
    let labels: Vec<String> = groups
        .iter()
        .zip(&medians)
        .map(|(g, m)| format!("{} {m:.4} ({:.2} dB)", g.label, db(*m)))
        .collect();
    outcome(
        groups.iter().all(|g| g.complete()) && nondecreasing,
        format!("median final xi_z^2: {}", labels.join(", ")),
    )
}

fn squeezing_angle(default: &Group) -> Outcome {
    let Some(best) = default
        .runs
        .iter()
        .min_by(|a, b| a.final_xi_z_sq().total_cmp(&b.final_xi_z_sq()))
    else {
        return outcome(false, "no successful runs");
    };
    let off = (best.final_varphi() - FRAC_PI_2).abs();
    let within = default
        .runs
        .iter()
        .filter(|r| (r.final_varphi() - FRAC_PI_2).abs() <= ANGLE_TOL)
        .count();
    outcome(
        off <= ANGLE_TOL,
        format!(
            "best schedule (seed {}) varphi {:.4}, |varphi - pi/2| {off:.4} (<= {ANGLE_TOL}); {within}/{} runs within",
            best.seed,
            best.final_varphi(),
            default.runs.len()
        ),
    )
}

fn report(index: usize, name: &str, started: Instant, o: &Outcome) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {index:>2} {status} {name} [{:.1} s]: {}",
        started.elapsed().as_secs_f64(),
        o.detail
    );
}

fn main() -> ExitCode {
    let samples: usize = std::env::var("SPINSQ_ACCEPTANCE_SAMPLES")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(10);
    let workers = workers_from_env().unwrap_or(1);
    let mut results = Vec::new();
    let mut run = |index: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let o = f();
        report(index, name, started, &o);
        results.push(o.pass);
    };

    run(1, "integrator matches exact propagation", &mut integrator_oracle);
    run(2, "spin algebra and QFI identities", &mut algebra_suite);
    run(3, "squeezing angle matches angular scan", &mut squeezing_angle_scan);
    run(4, "backpropagation matches finite differences", &mut gradient_check);
    run(10, "training exports are hash-identical", &mut determinism);

    println!("training {samples} seeds for each of 7 configurations on {workers} workers");
    let started = Instant::now();
    let groups = campaign(samples, workers);
    println!("campaign finished in {:.0} s", started.elapsed().as_secs_f64());
    for g in &groups {
        for f in &g.failures {
            println!("  {} failed: {f}", g.label);
        }
    }

    let exp = ExperimentConfig::default();
    let baseline = evaluate_schedule(&exp, &ControlSchedule::constant(&exp, BASELINE_AMPLITUDE)).unwrap();
    let baseline_final = *baseline.xi_z_sq.last().unwrap();
    let default = find(&groups, "default");

    run(5, "default training squeezes below -4 dB", &mut || central_claim(default, baseline_final));
    run(6, "100 segments beat 20 segments", &mut || {
        segment_ordering(default, find(&groups, "20 segments"))
    });
    run(7, "minimum squeezing deepens with N", &mut || {
        size_ordering(&[find(&groups, "N = 10"), default, find(&groups, "N = 40")])
    });
    run(8, "squeezing degrades with thermal noise", &mut || {
        thermal_ordering(&[
            default,
            find(&groups, "n_th = 0.1"),
            find(&groups, "n_th = 0.5"),
            find(&groups, "n_th = 1"),
        ])
    });
    run(9, "best schedule squeezes near pi/2", &mut || squeezing_angle(default));

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
