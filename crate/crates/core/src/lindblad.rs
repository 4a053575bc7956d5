//! Controlled collective-spin dynamics under superradiant damping, thermal
//! pumping, and collective dephasing.
//!
//! The dissipator is `D[X] rho = 2 X rho X^dag - X^dag X rho - rho X^dag X`
//! with `X = J-` for decay (rate `gamma (n_th + 1)`), `X = J+` for thermal
//! pumping (rate `gamma n_th`), and `X = Jz` for dephasing (rate `gamma_z`).
//! The factor of 2 is part of the convention, so rates compare directly with
//! values quoted in units of the twisting strength.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{CMatrix, DensityMatrix, SpinOperators};

/// Largest `N` for which the `(N+1)^2 x (N+1)^2` superoperator is built.
pub const EXACT_PROPAGATION_LIMIT: usize = 60;

/// Eigenvalues between this and zero are tolerated as integration and
/// round-off error; near-pure states have many eigenvalues close to zero.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;

const TRACE_DRIFT_LIMIT: f64 = 1e-9;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    pub gamma: f64,
    pub gamma_z: f64,
    pub n_th: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            gamma: 0.001,
            gamma_z: 0.001,
            n_th: 0.0,
        }
    }
}

impl NoiseParams {
    pub const NOISELESS: NoiseParams = NoiseParams {
        gamma: 0.0,
        gamma_z: 0.0,
        n_th: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_z", self.gamma_z),
            ("n_th", self.n_th),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    fn decay_rate(&self) -> f64 {
        self.gamma * (self.n_th + 1.0)
    }

    fn pump_rate(&self) -> f64 {
        self.gamma * self.n_th
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrationScheme {
    FixedStepRk4,
    ExactExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Minimum number of RK4 steps per segment.
    pub substeps_per_segment: usize,
    /// Upper bound on the RK4 step; long segments get more substeps.
    pub max_substep: f64,
    pub scheme: IntegrationScheme,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            substeps_per_segment: 10,
            max_substep: 0.002,
            scheme: IntegrationScheme::FixedStepRk4,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps_per_segment == 0 {
            return Err(Error::config("substeps_per_segment", "must be >= 1"));
        }
        if !(self.max_substep.is_finite() && self.max_substep > 0.0) {
            return Err(Error::config("max_substep", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// `H = Jz^2 + omega Jx` with the twisting strength as the unit.
pub fn build_hamiltonian(ops: &SpinOperators, omega: f64) -> CMatrix {
    &ops.jz_sq + &ops.jx * Complex64::new(omega, 0.0)
}

fn check_dim(expected: usize, m: &CMatrix) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: m.nrows(),
        });
    }
    Ok(())
}

fn dissipator(x: &CMatrix, rho: &CMatrix) -> CMatrix {
    let xd = x.adjoint();
    let xdx = &xd * x;
    (x * rho * &xd) * Complex64::new(2.0, 0.0) - &xdx * rho - rho * &xdx
}

/// Right-hand side of the master equation with dense matrix products.
///
/// This is the reference form; [`Rk4Propagator`] evaluates the same generator
/// with the banded structure of the spin operators.
pub fn lindblad_rhs(
    rho: &CMatrix,
    h: &CMatrix,
    ops: &SpinOperators,
    noise: &NoiseParams,
) -> Result<CMatrix> {
    let d = ops.dim();
    check_dim(d, rho)?;
    check_dim(d, h)?;
    let mut out = (h * rho - rho * h) * (-I);
    let channels = [
        (noise.decay_rate(), &ops.jminus),
        (noise.pump_rate(), &ops.jplus),
        (noise.gamma_z, &ops.jz),
    ];
    for (rate, x) in channels {
        if rate != 0.0 {
            out += dissipator(x, rho) * Complex64::new(rate, 0.0);
        }
    }
    Ok(out)
}

/// Liouvillian superoperator acting on column-stacked `vec(rho)`.
pub fn liouvillian(ops: &SpinOperators, omega: f64, noise: &NoiseParams) -> CMatrix {
    let d = ops.dim();
    let id = CMatrix::identity(d, d);
    let h = build_hamiltonian(ops, omega);
    // vec(A rho B) = (B^T kron A) vec(rho)
    let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-I);
    let channels = [
        (noise.decay_rate(), &ops.jminus),
        (noise.pump_rate(), &ops.jplus),
        (noise.gamma_z, &ops.jz),
    ];
    for (rate, x) in channels {
        if rate == 0.0 {
            continue;
        }
        let xdx = x.adjoint() * x;
        let term = x.conjugate().kronecker(x) * Complex64::new(2.0, 0.0)
            - id.kronecker(&xdx)
            - xdx.transpose().kronecker(&id);
        l += term * Complex64::new(rate, 0.0);
    }
    l
}

/// Precomputed `exp(dt L)` for a fixed amplitude and segment length.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    dim: usize,
    map: CMatrix,
}

impl ExactPropagator {
    pub fn new(ops: &SpinOperators, omega: f64, dt: f64, noise: &NoiseParams) -> Result<Self> {
        if ops.n_atoms() > EXACT_PROPAGATION_LIMIT {
            return Err(Error::TooLarge {
                n_atoms: ops.n_atoms(),
                limit: EXACT_PROPAGATION_LIMIT,
            });
        }
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::InvalidArgument(format!("segment duration {dt}")));
        }
        let d = ops.dim();
        let map = if dt == 0.0 {
            CMatrix::identity(d * d, d * d)
        } else {
            (liouvillian(ops, omega, noise) * Complex64::new(dt, 0.0)).exp()
        };
        Ok(Self { dim: d, map })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.dim, rho.matrix())?;
        let v = DMatrix::from_column_slice(self.dim * self.dim, 1, rho.matrix().as_slice());
        let out = &self.map * v;
        if out.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("exact propagation"));
        }
        Ok(DensityMatrix::from_raw(CMatrix::from_column_slice(
            self.dim,
            self.dim,
            out.as_slice(),
        )))
    }
}

/// Applies `exp(dt L)` to `rho` through the full superoperator.
pub fn propagate_exact(
    rho: &DensityMatrix,
    omega: f64,
    dt_segment: f64,
    ops: &SpinOperators,
    noise: &NoiseParams,
) -> Result<DensityMatrix> {
    ExactPropagator::new(ops, omega, dt_segment, noise)?.apply(rho)
}

/// The master-equation generator evaluated with the banded structure of the
/// spin operators.
///
/// Every term couples `rho[a][b]` only to itself and to entries one step away
/// along a row, a column, or the diagonal, so one evaluation costs `O(d^2)`.
/// Internally matrices are stored column-major with a one-entry zero border
/// (stride `d + 2`), which keeps the inner loop free of boundary checks.
#[derive(Debug, Clone)]
pub struct BandedGenerator {
    dim: usize,
    stride: usize,
    /// Twisting frequency `m_a^2 - m_b^2`; enters as `exp(-i w t)`.
    twist: Vec<f64>,
    /// Dissipative decay of `rho[a][b]` into itself.
    self_decay: Vec<f64>,
    /// Jx coupling of padded index `a` to `a - 1` and to `a + 1`.
    x_lo: Vec<f64>,
    x_hi: Vec<f64>,
    /// Weight of `rho[a-1][b-1]` from the lowering channel.
    from_above: Vec<f64>,
    /// Weight of `rho[a+1][b+1]` from the raising channel.
    from_below: Vec<f64>,
}

impl BandedGenerator {
    pub fn new(ops: &SpinOperators, noise: &NoiseParams) -> Self {
        let d = ops.dim();
        let p = d + 2;
        let c = ops.ladder();
        let m: Vec<f64> = (0..d).map(|k| ops.m(k)).collect();
        // diagonals of J+ J- and J- J+
        let jp_jm: Vec<f64> = (0..d).map(|a| if a + 1 < d { c[a] * c[a] } else { 0.0 }).collect();
        let jm_jp: Vec<f64> = (0..d).map(|a| if a > 0 { c[a - 1] * c[a - 1] } else { 0.0 }).collect();
        let (down, up, deph) = (noise.decay_rate(), noise.pump_rate(), noise.gamma_z);

        let mut twist = vec![0.0; p * p];
        let mut self_decay = vec![0.0; p * p];
        let mut from_above = vec![0.0; p * p];
        let mut from_below = vec![0.0; p * p];
        for b in 0..d {
            for a in 0..d {
                let idx = (a + 1) + (b + 1) * p;
                let dm = m[a] - m[b];
                self_decay[idx] =
                    -down * (jp_jm[a] + jp_jm[b]) - up * (jm_jp[a] + jm_jp[b]) - deph * dm * dm;
                twist[idx] = m[a] * m[a] - m[b] * m[b];
                if a > 0 && b > 0 {
                    from_above[idx] = 2.0 * down * c[a - 1] * c[b - 1];
                }
                if a + 1 < d && b + 1 < d {
                    from_below[idx] = 2.0 * up * c[a] * c[b];
                }
            }
        }
        let mut x_lo = vec![0.0; p];
        let mut x_hi = vec![0.0; p];
        for a in 0..d {
            if a > 0 {
                x_lo[a + 1] = 0.5 * c[a - 1];
            }
            if a + 1 < d {
                x_hi[a + 1] = 0.5 * c[a];
            }
        }
        Self {
            dim: d,
            stride: p,
            twist,
            self_decay,
            x_lo,
            x_hi,
            from_above,
            from_below,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = L(omega) rho`, both column-major `d x d`.
    pub fn apply(&self, omega: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_unpadded::<true>(omega, rho, out)
    }

    /// Everything except the twisting commutator `-i[Jz^2, rho]`.
    pub fn apply_without_twist(&self, omega: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_unpadded::<false>(omega, rho, out)
    }

    fn apply_unpadded<const TWIST: bool>(&self, omega: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let mut padded = self.padded_zeros();
        self.pad(rho, &mut padded);
        let mut result = self.padded_zeros();
        self.apply_padded::<TWIST>(omega, &padded, &mut result);
        self.unpad(&result, out);
    }

    fn padded_zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.stride * self.stride]
    }

    fn pad(&self, rho: &[Complex64], padded: &mut [Complex64]) {
        let (d, p) = (self.dim, self.stride);
        for b in 0..d {
            padded[(b + 1) * p + 1..(b + 1) * p + 1 + d].copy_from_slice(&rho[b * d..(b + 1) * d]);
        }
    }

    fn unpad(&self, padded: &[Complex64], rho: &mut [Complex64]) {
        let (d, p) = (self.dim, self.stride);
        for b in 0..d {
            rho[b * d..(b + 1) * d].copy_from_slice(&padded[(b + 1) * p + 1..(b + 1) * p + 1 + d]);
        }
    }

    /// Writes the interior of `out`; its border is left untouched.
    fn apply_padded<const TWIST: bool>(&self, omega: f64, rho: &[Complex64], out: &mut [Complex64]) {
        for b in 1..=self.dim {
            self.apply_column::<TWIST>(omega, rho, out, b, 1);
        }
    }

    /// Lower triangle (with the diagonal) of the generator applied to a
    /// Hermitian `rho` whose lower triangle and superdiagonal are current.
    fn apply_padded_lower(&self, omega: f64, rho: &[Complex64], out: &mut [Complex64]) {
        for b in 1..=self.dim {
            self.apply_column::<false>(omega, rho, out, b, b);
        }
    }

    #[inline(always)]
    fn apply_column<const TWIST: bool>(
        &self,
        omega: f64,
        rho: &[Complex64],
        out: &mut [Complex64],
        b: usize,
        first_row: usize,
    ) {
        let p = self.stride;
        let (xl, xr) = (self.x_lo[b], self.x_hi[b]);
        for a in first_row..=self.dim {
            let i = a + b * p;
            let comm = rho[i - 1] * self.x_lo[a] + rho[i + 1] * self.x_hi[a] - rho[i - p] * xl - rho[i + p] * xr;
            // -i omega [Jx, rho]
            let mut v = rho[i] * self.self_decay[i]
                + Complex64::new(omega * comm.im, -omega * comm.re)
                + rho[i - p - 1] * self.from_above[i]
                + rho[i + p + 1] * self.from_below[i];
            if TWIST {
                let r = rho[i];
                v += Complex64::new(self.twist[i] * r.im, -self.twist[i] * r.re);
            }
            out[i] = v;
        }
    }

    /// Index ranges of the lower triangle, one per column.
    fn lower_ranges(&self) -> Vec<(usize, usize)> {
        let p = self.stride;
        (1..=self.dim).map(|b| (b + b * p, self.dim + 1 + b * p)).collect()
    }

    /// Restores the superdiagonal from the subdiagonal.
    fn sync_superdiagonal(&self, m: &mut [Complex64]) {
        let p = self.stride;
        for r in 1..self.dim {
            m[r + (r + 1) * p] = m[(r + 1) + r * p].conj();
        }
    }

    fn mirror_lower(&self, m: &mut [Complex64]) {
        let p = self.stride;
        for b in 1..=self.dim {
            for a in b + 1..=self.dim {
                m[b + a * p] = m[a + b * p].conj();
            }
        }
    }
}

/// Fixed-step fourth-order Runge-Kutta over [`BandedGenerator`].
///
/// The twisting phase `exp(-i (m_a^2 - m_b^2) t)` is integrated exactly as an
/// integrating factor (Lawson RK4); the remaining generator, whose norm is set
/// by the control amplitude and the weak dissipation, is handled by the
/// classical RK4 stages. The factor is 1 on the diagonal, so the trace is
/// conserved to round-off.
#[derive(Debug, Clone)]
pub struct Rk4Propagator {
    generator: BandedGenerator,
    substeps: usize,
    max_step: f64,
    /// Cached `(h, exp(-i w h / 2))` for the last step size.
    half_phase: Option<(f64, Vec<Complex64>)>,
    lower: Vec<(usize, usize)>,
    /// Padded working copy of the state.
    state: Vec<Complex64>,
    k: Vec<Complex64>,
    acc: Vec<Complex64>,
    probe: Vec<Complex64>,
}

impl Rk4Propagator {
    pub fn new(ops: &SpinOperators, noise: &NoiseParams, substeps: usize) -> Self {
        let generator = BandedGenerator::new(ops, noise);
        let zeros = generator.padded_zeros();
        let lower = generator.lower_ranges();
        Self {
            generator,
            substeps: substeps.max(1),
            max_step: f64::INFINITY,
            half_phase: None,
            lower,
            state: zeros.clone(),
            k: zeros.clone(),
            acc: zeros.clone(),
            probe: zeros,
        }
    }

    pub fn generator(&self) -> &BandedGenerator {
        &self.generator
    }

    /// Caps the step length; segments longer than `substeps * max_step`
    /// are split further.
    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    /// Number of RK4 steps used for a segment of length `dt`.
    pub fn substeps(&self, dt: f64) -> usize {
        let needed = (dt / self.max_step).ceil();
        if needed.is_finite() && needed > self.substeps as f64 {
            needed as usize
        } else {
            self.substeps
        }
    }

    fn ensure_phase(&mut self, h: f64) {
        if matches!(&self.half_phase, Some((cached, _)) if *cached == h) {
            return;
        }
        let phase = self
            .generator
            .twist
            .iter()
            .map(|w| Complex64::from_polar(1.0, -w * h / 2.0))
            .collect();
        self.half_phase = Some((h, phase));
    }

    /// One Lawson RK4 step on the lower triangle of the padded state.
    /// The generator and the phase factor preserve Hermiticity, so the upper
    /// triangle is only needed on the superdiagonal, which is refreshed after
    /// every stage.
    fn step(&mut self, omega: f64, h: f64) {
        self.ensure_phase(h);
        let Self {
            generator,
            half_phase,
            lower,
            state: rho,
            k,
            acc,
            probe,
            ..
        } = self;
        let e = &half_phase.as_ref().expect("phase cached").1;
        let (h2, h3, h6) = (h / 2.0, h / 3.0, h / 6.0);

        // acc collects E^2 rho + h/6 (E^2 k1 + 2 E k2 + 2 E k3 + k4) in stages.
        generator.apply_padded_lower(omega, rho, k);
        for &(lo, hi) in lower.iter() {
            for i in lo..hi {
                let e2 = e[i] * e[i];
                acc[i] = e2 * (rho[i] + k[i] * h6);
                probe[i] = e[i] * (rho[i] + k[i] * h2);
            }
        }
        generator.sync_superdiagonal(probe);
        generator.apply_padded_lower(omega, probe, k);
        for &(lo, hi) in lower.iter() {
            for i in lo..hi {
                acc[i] += e[i] * k[i] * h3;
                probe[i] = e[i] * rho[i] + k[i] * h2;
            }
        }
        generator.sync_superdiagonal(probe);
        generator.apply_padded_lower(omega, probe, k);
        for &(lo, hi) in lower.iter() {
            for i in lo..hi {
                acc[i] += e[i] * k[i] * h3;
                probe[i] = e[i] * (e[i] * rho[i] + k[i] * h);
            }
        }
        generator.sync_superdiagonal(probe);
        generator.apply_padded_lower(omega, probe, k);
        for &(lo, hi) in lower.iter() {
            for i in lo..hi {
                rho[i] = acc[i] + k[i] * h6;
            }
        }
        generator.sync_superdiagonal(rho);
    }

    /// Propagates `rho` for `dt` at constant `omega`, then re-Hermitizes and
    /// renormalizes the trace.
    pub fn propagate(&mut self, rho: &DensityMatrix, omega: f64, dt: f64) -> Result<DensityMatrix> {
        check_dim(self.generator.dim, rho.matrix())?;
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::InvalidArgument(format!("segment duration {dt}")));
        }
        if dt == 0.0 {
            return Ok(rho.clone());
        }
        self.generator.pad(rho.matrix().as_slice(), &mut self.state);
        let substeps = self.substeps(dt);
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            self.step(omega, h);
        }
        self.generator.mirror_lower(&mut self.state);
        let mut data = rho.matrix().clone();
        self.generator.unpad(&self.state, data.as_mut_slice());
        finish_segment(data, rho.trace())
    }
}

/// Re-Hermitizes, checks finiteness and trace drift, and renormalizes.
fn finish_segment(mut data: CMatrix, trace_before: f64) -> Result<DensityMatrix> {
    if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("segment propagation"));
    }
    let d = data.nrows();
    for c in 0..d {
        for r in c..d {
            let v = (data[(r, c)] + data[(c, r)].conj()) * 0.5;
            data[(r, c)] = v;
            data[(c, r)] = v.conj();
        }
    }
    let trace = data.trace().re;
    let drift = (trace - trace_before).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::TraceDrift { drift });
    }
    data.unscale_mut(trace);
    Ok(DensityMatrix::from_raw(data))
}

/// Propagates one control segment of length `dt_segment` at amplitude `omega`.
pub fn evolve_segment(
    rho: &DensityMatrix,
    omega: f64,
    dt_segment: f64,
    ops: &SpinOperators,
    noise: &NoiseParams,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    cfg.validate()?;
    match cfg.scheme {
        IntegrationScheme::FixedStepRk4 => {
            Rk4Propagator::new(ops, noise, cfg.substeps_per_segment)
                .with_max_step(cfg.max_substep)
                .propagate(rho, omega, dt_segment)
        }
        IntegrationScheme::ExactExponential => {
            if dt_segment == 0.0 {
                return Ok(rho.clone());
            }
            let out = propagate_exact(rho, omega, dt_segment, ops, noise)?;
            finish_segment(out.into_matrix(), rho.trace())
        }
    }
}

/// Errors when `rho` has an eigenvalue below `-POSITIVITY_TOLERANCE`.
pub fn check_positivity(rho: &DensityMatrix) -> Result<f64> {
    let min_eigenvalue = rho.min_eigenvalue();
    if min_eigenvalue < -POSITIVITY_TOLERANCE {
        return Err(Error::NotPositive { min_eigenvalue });
    }
    Ok(min_eigenvalue)
}
