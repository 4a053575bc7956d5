//! Collective-spin operators in the symmetric `|j, m>` subspace and the
//! density-matrix type shared by every other module.
//!
//! Basis ordering is fixed: row/column `k` holds `m = j - k`, so index 0 is
//! the north pole `|j, j>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = 1e-9;

/// Spin matrices for `N = 2j` two-level atoms.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    n_atoms: usize,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
    pub jplus: CMatrix,
    pub jminus: CMatrix,
    pub jz_sq: CMatrix,
    /// `ladder[k] = <j, m_k | J+ | j, m_{k+1}>`, the coupling between rows `k` and `k + 1`.
    ladder: Vec<f64>,
    /// Symmetrized products `(J_a J_b + J_b J_a) / 2` for `a, b` in `x, y, z`.
    sym_products: [[CMatrix; 3]; 3],
}

impl SpinOperators {
    pub fn new(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::ZeroAtoms);
        }
        let dim = n_atoms + 1;
        let j = n_atoms as f64 / 2.0;

        let ladder: Vec<f64> = (0..dim - 1)
            .map(|k| {
                // J+ maps m = j - (k + 1) up to m + 1 = j - k
                let m = j - (k + 1) as f64;
                (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
            })
            .collect();

        let mut jplus = CMatrix::zeros(dim, dim);
        for (k, &c) in ladder.iter().enumerate() {
            jplus[(k, k + 1)] = Complex64::new(c, 0.0);
        }
        let jminus = jplus.adjoint();
        let jz = CMatrix::from_diagonal(&CVector::from_fn(dim, |k, _| {
            Complex64::new(j - k as f64, 0.0)
        }));
        let half = Complex64::new(0.5, 0.0);
        let jx = (&jplus + &jminus) * half;
        let jy = (&jplus - &jminus) * Complex64::new(0.0, -0.5);
        let jz_sq = &jz * &jz;

        let comps = [&jx, &jy, &jz];
        let sym_products = std::array::from_fn(|a| {
            std::array::from_fn(|b| (comps[a] * comps[b] + comps[b] * comps[a]) * half)
        });

        Ok(Self {
            n_atoms,
            jx,
            jy,
            jz,
            jplus,
            jminus,
            jz_sq,
            ladder,
            sym_products,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    /// Total spin quantum number `j = N / 2`.
    pub fn j(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    /// `m` value of basis row `k`.
    pub fn m(&self, k: usize) -> f64 {
        self.j() - k as f64
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    /// Cartesian component by index (0 = x, 1 = y, 2 = z).
    pub fn component(&self, axis: usize) -> &CMatrix {
        match axis {
            0 => &self.jx,
            1 => &self.jy,
            2 => &self.jz,
            _ => panic!("spin component index {axis} out of range"),
        }
    }

    pub fn sym_product(&self, a: usize, b: usize) -> &CMatrix {
        &self.sym_products[a][b]
    }

    /// Amplitudes of the coherent spin state pointing along `(theta, phi)`.
    ///
    /// `theta = 0` is `|j, j>`. Consecutive `m` amplitudes differ by a factor
    /// `e^{i phi} tan(theta / 2)` going down the ladder, so `phi` is the usual
    /// azimuth: `<J_x> + i <J_y> = j sin(theta) e^{i phi}`.
    pub fn coherent_state_vector(&self, theta: f64, phi: f64) -> CVector {
        let n = self.n_atoms;
        let (s, c) = (theta / 2.0).sin_cos();
        let mut binom = Vec::with_capacity(n + 1);
        binom.push(1.0_f64);
        for k in 1..=n {
            binom.push(binom[k - 1] * (n + 1 - k) as f64 / k as f64);
        }
        CVector::from_fn(n + 1, |k, _| {
            let mag = binom[k].sqrt() * c.powi((n - k) as i32) * s.powi(k as i32);
            Complex64::from_polar(mag, k as f64 * phi)
        })
    }
}

pub fn build_spin_operators(n_atoms: usize) -> Result<SpinOperators> {
    SpinOperators::new(n_atoms)
}

/// Hermitian, unit-trace, positive semidefinite state of the collective spin.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Wraps `data` after checking Hermiticity, trace, and positivity.
    pub fn new(data: CMatrix) -> Result<Self> {
        let rho = Self(data);
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps `data` without validation. Callers own the invariants.
    pub fn from_raw(data: CMatrix) -> Self {
        Self(data)
    }

    pub fn pure(state: &CVector) -> Result<Self> {
        let norm = state.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("state vector has zero norm".into()));
        }
        let psi = state.unscale(norm);
        Ok(Self(&psi * psi.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    /// Projector onto basis row `k` (that is, `m = j - k`).
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut data = CMatrix::zeros(dim, dim);
        data[(k, k)] = Complex64::new(1.0, 0.0);
        Self(data)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for c in 0..d {
            for r in c..d {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.nrows() != self.0.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "density matrix is {}x{}",
                self.0.nrows(),
                self.0.ncols()
            )));
        }
        if self.0.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("density matrix validation"));
        }
        let deviation = self.hermiticity_error();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = self.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace { trace });
        }
        let min_eigenvalue = self.min_eigenvalue();
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(())
    }
}

pub fn coherent_spin_state(ops: &SpinOperators, theta: f64, phi: f64) -> Result<DensityMatrix> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta = {theta} outside [0, pi]"
        )));
    }
    DensityMatrix::pure(&ops.coherent_state_vector(theta, phi))
}

/// `Tr[rho op]`.
pub fn expectation(rho: &DensityMatrix, op: &CMatrix) -> Result<Complex64> {
    let d = rho.dim();
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: op.nrows(),
        });
    }
    Ok(trace_product(rho.matrix(), op))
}

/// `Tr[a b]` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..d {
        for r in 0..d {
            acc += a[(r, c)] * b[(c, r)];
        }
    }
    acc
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr[rho^2] = sum |rho_ab|^2 for Hermitian rho
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}
