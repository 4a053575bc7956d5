//! State diagnostics: mean-spin frame, squeezing parameters, quantum Fisher
//! information, Husimi distributions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use crate::error::{Error, Result};
use crate::spin::{trace_product, CMatrix, DensityMatrix, SpinOperators};

/// Below this mean-spin length the squeezing frame is undefined.
pub const MIN_MEAN_SPIN: f64 = 1e-9;

/// QFI eigenvalue cutoff: smaller populations count as zero.
pub const QFI_CUTOFF: f64 = 1e-12;

/// First and symmetrized second moments of `(Jx, Jy, Jz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMoments {
    pub mean: [f64; 3],
    /// `second[a][b] = <(J_a J_b + J_b J_a) / 2>`.
    pub second: [[f64; 3]; 3],
}

impl SpinMoments {
    pub fn of(rho: &DensityMatrix, ops: &SpinOperators) -> Result<Self> {
        if rho.dim() != ops.dim() {
            return Err(Error::DimensionMismatch {
                expected: ops.dim(),
                found: rho.dim(),
            });
        }
        let m = rho.matrix();
        let mean = std::array::from_fn(|a| trace_product(m, ops.component(a)).re);
        let mut second = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                let v = trace_product(m, ops.sym_product(a, b)).re;
                second[a][b] = v;
                second[b][a] = v;
            }
        }
        Ok(Self { mean, second })
    }

    pub fn mean_norm(&self) -> f64 {
        dot(&self.mean, &self.mean).sqrt()
    }

    /// `<(J.u)(J.v) + (J.v)(J.u)> / 2`.
    pub fn quadratic(&self, u: &[f64; 3], v: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                acc += u[a] * self.second[a][b] * v[b];
            }
        }
        acc
    }
}

fn dot(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// Polar angles of the mean spin and the two transverse unit vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSpinFrame {
    pub theta: f64,
    pub phi: f64,
    pub norm: f64,
    pub n1: [f64; 3],
    pub n2: [f64; 3],
}

impl MeanSpinFrame {
    pub fn from_moments(moments: &SpinMoments) -> Result<Self> {
        let norm = moments.mean_norm();
        if !(norm > MIN_MEAN_SPIN) {
            return Err(Error::DegenerateMeanSpin { norm });
        }
        let [jx, jy, jz] = moments.mean;
        let theta = (jz / norm).clamp(-1.0, 1.0).acos();
        let transverse = norm * theta.sin();
        // At the poles phi is undefined; 0 by convention.
        let phi = if transverse <= 1e-12 * norm {
            0.0
        } else {
            let sign = if jy < 0.0 { -1.0 } else { 1.0 };
            sign * (jx / transverse).clamp(-1.0, 1.0).acos()
        };
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Ok(Self {
            theta,
            phi,
            norm,
            n1: [-sp, cp, 0.0],
            n2: [ct * cp, ct * sp, -st],
        })
    }

    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// `n1 cos(varphi) + n2 sin(varphi)`.
    pub fn transverse(&self, varphi: f64) -> [f64; 3] {
        let (s, c) = varphi.sin_cos();
        std::array::from_fn(|i| self.n1[i] * c + self.n2[i] * s)
    }
}

pub fn mean_spin_frame(rho: &DensityMatrix, ops: &SpinOperators) -> Result<MeanSpinFrame> {
    MeanSpinFrame::from_moments(&SpinMoments::of(rho, ops)?)
}

/// Squeezing along z relative to the mean-spin length.
pub fn xi_z_squared_from(moments: &SpinMoments, n_atoms: usize) -> Result<f64> {
    let norm = moments.mean_norm();
    if !(norm > MIN_MEAN_SPIN) {
        return Err(Error::DegenerateMeanSpin { norm });
    }
    let var = moments.second[2][2] - moments.mean[2] * moments.mean[2];
    Ok(n_atoms as f64 * var / (norm * norm))
}

pub fn xi_z_squared(rho: &DensityMatrix, ops: &SpinOperators) -> Result<f64> {
    xi_z_squared_from(&SpinMoments::of(rho, ops)?, ops.n_atoms())
}

/// Minimal transverse squeezing and the minimizing angle in `[0, pi)`.
pub fn xi_perp_squared_from(moments: &SpinMoments, n_atoms: usize) -> Result<(f64, f64)> {
    let frame = MeanSpinFrame::from_moments(moments)?;
    let (n1, n2) = (&frame.n1, &frame.n2);
    let v11 = moments.quadratic(n1, n1);
    let v22 = moments.quadratic(n2, n2);
    let a = v11 - v22;
    let b = 2.0 * moments.quadratic(n1, n2);
    let radius = a.hypot(b);
    let xi = n_atoms as f64 * (v11 + v22 - radius) / (2.0 * frame.norm * frame.norm);

    // Isotropic transverse noise: every direction is minimal.
    let varphi = if radius <= 1e-12 * (v11 + v22).abs().max(1e-300) {
        PI / 2.0
    } else {
        let half = 0.5 * (-a / radius).clamp(-1.0, 1.0).acos();
        let angle = if b <= 0.0 { half } else { PI - half };
        if angle >= PI {
            angle - PI
        } else {
            angle
        }
    };
    Ok((xi, varphi))
}

pub fn xi_perp_squared(rho: &DensityMatrix, ops: &SpinOperators) -> Result<(f64, f64)> {
    xi_perp_squared_from(&SpinMoments::of(rho, ops)?, ops.n_atoms())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingReport {
    pub xi_z_sq: f64,
    pub xi_perp_sq: f64,
    pub varphi: f64,
    pub xi_z_db: f64,
    pub xi_perp_db: f64,
}

pub fn squeezing_report(rho: &DensityMatrix, ops: &SpinOperators) -> Result<SqueezingReport> {
    let moments = SpinMoments::of(rho, ops)?;
    let xi_z_sq = xi_z_squared_from(&moments, ops.n_atoms())?;
    let (xi_perp_sq, varphi) = xi_perp_squared_from(&moments, ops.n_atoms())?;
    Ok(SqueezingReport {
        xi_z_sq,
        xi_perp_sq,
        varphi,
        xi_z_db: to_decibels(xi_z_sq)?,
        xi_perp_db: to_decibels(xi_perp_sq)?,
    })
}

/// Spectral decomposition of a density matrix, reusable across generators.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub populations: Vec<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn of(rho: &DensityMatrix) -> Self {
        let SymmetricEigen {
            eigenvalues,
            eigenvectors,
        } = rho.matrix().clone().symmetric_eigen();
        Self {
            populations: eigenvalues.iter().cloned().collect(),
            vectors: eigenvectors,
        }
    }

    pub fn min_population(&self) -> f64 {
        self.populations.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Quantum Fisher information for phase shifts generated by `generator`.
    pub fn qfi(&self, generator: &CMatrix) -> Result<f64> {
        let d = self.populations.len();
        if generator.nrows() != d || generator.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: generator.nrows(),
            });
        }
        let dev = hermiticity_error(generator);
        if dev > 1e-10 * (1.0 + generator.norm()) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let p: Vec<f64> = self
            .populations
            .iter()
            .map(|&x| if x < QFI_CUTOFF { 0.0 } else { x })
            .collect();
        let v = &self.vectors;
        // matrix elements <psi_m|G|psi_n>
        let g = v.adjoint() * generator * v;
        let g_sq = v.adjoint() * (generator * generator) * v;

        let mut f = 0.0;
        for n in 0..d {
            if p[n] == 0.0 {
                continue;
            }
            let var = g_sq[(n, n)].re - g[(n, n)].norm_sqr();
            f += 4.0 * p[n] * var;
        }
        for m in 0..d {
            for n in 0..d {
                if m == n {
                    continue;
                }
                let s = p[m] + p[n];
                if s < QFI_CUTOFF || p[m] == 0.0 || p[n] == 0.0 {
                    continue;
                }
                f -= 8.0 * p[m] * p[n] / s * g[(m, n)].norm_sqr();
            }
        }
        Ok(f.max(0.0))
    }
}

fn hermiticity_error(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0_f64;
    for c in 0..d {
        for r in c..d {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn qfi(rho: &DensityMatrix, generator: &CMatrix) -> Result<f64> {
    Spectrum::of(rho).qfi(generator)
}

/// Mean QFI over `Jx`, `Jy`, `Jz`, divided by `N^2`.
pub fn averaged_qfi(rho: &DensityMatrix, ops: &SpinOperators) -> Result<f64> {
    averaged_qfi_from(&Spectrum::of(rho), ops)
}

/// Averaged QFI from a precomputed spectrum.
///
/// Matrix elements of `Jx` and `Jy` come from those of `J+` in the eigenbasis,
/// and `<psi|G^2|psi>` is taken as `|G psi|^2` with banded products, so only
/// two dense products are needed for all three generators.
pub fn averaged_qfi_from(spectrum: &Spectrum, ops: &SpinOperators) -> Result<f64> {
    let d = ops.dim();
    let v = &spectrum.vectors;
    if v.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: v.nrows(),
        });
    }
    let c = ops.ladder();
    let p: Vec<f64> = spectrum
        .populations
        .iter()
        .map(|&x| if x < QFI_CUTOFF { 0.0 } else { x })
        .collect();

    // J+ V and Jz V without dense products
    let raised = CMatrix::from_fn(d, d, |a, n| {
        if a + 1 < d {
            v[(a + 1, n)] * c[a]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let lowered = CMatrix::from_fn(d, d, |a, n| {
        if a > 0 {
            v[(a - 1, n)] * c[a - 1]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let gp = v.ad_mul(&raised);
    let gz = v.ad_mul(&CMatrix::from_fn(d, d, |a, n| v[(a, n)] * ops.m(a)));

    let half = 0.5;
    let mut total = 0.0;
    for n in 0..d {
        if p[n] == 0.0 {
            continue;
        }
        let mut nx = 0.0;
        let mut ny = 0.0;
        let mut nz = 0.0;
        for a in 0..d {
            let up = raised[(a, n)];
            let down = lowered[(a, n)];
            nx += ((up + down) * half).norm_sqr();
            ny += ((up - down) * half).norm_sqr();
            nz += (v[(a, n)] * ops.m(a)).norm_sqr();
        }
        let gx = (gp[(n, n)] + gp[(n, n)].conj()) * half;
        let gy = (gp[(n, n)] - gp[(n, n)].conj()) * half;
        let var = nx - gx.norm_sqr() + ny - gy.norm_sqr() + nz - gz[(n, n)].norm_sqr();
        total += 4.0 * p[n] * var;
    }
    for m in 0..d {
        for n in 0..d {
            if m == n || p[m] == 0.0 || p[n] == 0.0 {
                continue;
            }
            let s = p[m] + p[n];
            if s < QFI_CUTOFF {
                continue;
            }
            // <m|Jx|n> = (g+_mn + conj(g+_nm)) / 2, <m|Jy|n> = (g+_mn - conj(g+_nm)) / 2i
            let gx = (gp[(m, n)] + gp[(n, m)].conj()) * half;
            let gy = (gp[(m, n)] - gp[(n, m)].conj()) * half;
            let weight = 8.0 * p[m] * p[n] / s;
            total -= weight * (gx.norm_sqr() + gy.norm_sqr() + gz[(m, n)].norm_sqr());
        }
    }
    let n_atoms = ops.n_atoms() as f64;
    Ok(total.max(0.0) / (3.0 * n_atoms * n_atoms))
}

/// `<theta, phi| rho |theta, phi>`.
pub fn husimi_q(rho: &DensityMatrix, ops: &SpinOperators, theta: f64, phi: f64) -> f64 {
    let psi = ops.coherent_state_vector(theta, phi);
    (psi.adjoint() * rho.matrix() * &psi)[(0, 0)].re
}

/// Uniform `(theta, phi)` grid including both endpoints of each axis.
#[derive(Debug, Clone)]
pub struct HusimiGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `values[(i, k)]` is the overlap at `(thetas[i], phis[k])`.
    pub values: DMatrix<f64>,
}

/// Overlap with coherent states on `theta` in `[0, pi]` and `phi` in `[-pi, pi]`.
///
/// Values are raw projector expectations in `[0, 1]`, without the
/// `(2j + 1) / 4 pi` density factor.
pub fn husimi_grid(
    rho: &DensityMatrix,
    ops: &SpinOperators,
    n_theta: usize,
    n_phi: usize,
) -> Result<HusimiGrid> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::InvalidArgument(format!(
            "Husimi grid needs at least 2 points per axis, got {n_theta} x {n_phi}"
        )));
    }
    if rho.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: rho.dim(),
        });
    }
    let linspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let thetas = linspace(0.0, PI, n_theta);
    let phis = linspace(-PI, PI, n_phi);
    let values = DMatrix::from_fn(n_theta, n_phi, |i, k| {
        husimi_q(rho, ops, thetas[i], phis[k]).clamp(0.0, 1.0)
    });
    Ok(HusimiGrid {
        thetas,
        phis,
        values,
    })
}

pub fn to_decibels(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "decibels need a positive value, got {x}"
        )));
    }
    Ok(10.0 * x.log10())
}
