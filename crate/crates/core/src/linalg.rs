//! Dense complex linear algebra for small state spaces and the exact
//! matrix-exponential reference dynamics.
//!
//! Everything here assumes `F <= 64`; all routines are `O(F^3)` and
//! allocation-light. Time is measured in inverse energy units (`hbar = 1`).

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Absolute tolerance for the Hermitian invariant of [`HermitianMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from nested rows. Fails if the rows are ragged.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::NotSquare { row: i, expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// The elementary operator `|row><col|`.
    pub fn unit(dim: usize, row: usize, col: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(row, col)] = ONE;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `out = self * v`.
    #[inline]
    pub fn mul_vec_into(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    /// Largest `|A_ij - conj(A_ji)|` and the position where it occurs.
    pub fn max_asymmetry(&self) -> (f64, usize, usize) {
        let mut worst = (0.0, 0, 0);
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }

    /// `|| A^dagger A - I ||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().matmul(self).sub(&Self::identity(self.dim)).frobenius_norm()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// A complex Hermitian `F x F` operator: Hamiltonians, densities,
/// observables and kernel values.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates Hermiticity to [`HERMITIAN_TOL`].
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, HERMITIAN_TOL)
    }

    /// Validates Hermiticity to `tol`, then symmetrizes exactly.
    pub fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        if m.dim() == 0 {
            return Err(Error::Domain("matrix dimension must be at least 1".into()));
        }
        let (max_asymmetry, row, col) = m.max_asymmetry();
        if max_asymmetry > tol {
            return Err(Error::NotHermitian { max_asymmetry, row, col });
        }
        Ok(Self::hermitize(m))
    }

    /// Replaces `m` by `(m + m^dagger) / 2` without checking.
    pub(crate) fn hermitize(mut m: CMatrix) -> Self {
        let n = m.dim();
        for i in 0..n {
            m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        Self(m)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::new(CMatrix::from_real_rows(rows)?)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self(CMatrix::diagonal(&values.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>()))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim))
    }

    /// The projector `|n><n|`.
    pub fn projector(dim: usize, n: usize) -> Self {
        Self(CMatrix::unit(dim, n, n))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> f64 {
        hermitian_eig(self).eigenvalues.iter().fold(0.0, |m, l| m.max(l.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.scale(C64::new(s, 0.0)))
    }
}

impl Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Eigen-decomposition `H = V diag(lambda) V^dagger` with ascending
/// eigenvalues. Each eigenvector's first entry of largest modulus is real
/// and non-negative.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> Vec<C64> {
        (0..self.dim()).map(|r| self.eigenvectors[(r, i)]).collect()
    }

    /// `sum_i f(lambda_i) v_i v_i^dagger`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let w: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        CMatrix::from_fn(n, |i, j| (0..n).map(|k| v[(i, k)] * w[k] * v[(j, k)].conj()).sum())
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.reconstruct_with(|l| C64::new(l, 0.0))
    }

    /// `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> UnitaryPropagator {
        UnitaryPropagator {
            matrix: self.reconstruct_with(|l| C64::from_polar(1.0, -l * t)),
            time: t,
        }
    }
}

/// Diagonalizes a Hermitian matrix with cyclic complex Jacobi rotations.
pub fn hermitian_eig(h: &HermitianMatrix) -> SpectralDecomposition {
    let n = h.dim();
    let mut a = h.as_matrix().clone();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);

    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = D P with D_qq = conj(phase); columns p and q of G.
                let g_pp = C64::new(c, 0.0);
                let g_pq = C64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;

                for i in 0..n {
                    let (aip, aiq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = aip * g_pp + aiq * g_qp;
                    a[(i, q)] = aip * g_pq + aiq * g_qq;
                    let (vip, viq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = vip * g_pp + viq * g_qp;
                    v[(i, q)] = vip * g_pq + viq * g_qq;
                }
                for j in 0..n {
                    let (apj, aqj) = (a[(p, j)], a[(q, j)]);
                    a[(p, j)] = g_pp.conj() * apj + g_qp.conj() * aqj;
                    a[(q, j)] = g_pq.conj() * apj + g_qq.conj() * aqj;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec: Vec<C64> = (0..n).map(|r| v[(r, src)]).collect();
        fix_phase(&mut vec);
        for (r, z) in vec.into_iter().enumerate() {
            vectors[(r, col)] = z;
        }
    }
    SpectralDecomposition { eigenvalues, eigenvectors: vectors }
}

/// Rotates `v` so its first entry of (numerically) largest modulus is real
/// and non-negative.
fn fix_phase(v: &mut [C64]) {
    let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap_or(0);
    let rot = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// `U(t) = exp(-i H t)`.
#[derive(Clone, Debug)]
pub struct UnitaryPropagator {
    pub matrix: CMatrix,
    pub time: f64,
}

impl UnitaryPropagator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

pub fn propagator(h: &HermitianMatrix, t: f64) -> UnitaryPropagator {
    hermitian_eig(h).propagator(t)
}

/// `series[k] = Tr[rho U(t_k)^dagger A U(t_k)]`.
///
/// `rho` and `a` may be any operators (e.g. `|n><m|`), not only Hermitian ones.
pub fn exact_tcf(rho: &CMatrix, a: &CMatrix, h: &HermitianMatrix, t_grid: &[f64]) -> Result<Vec<C64>> {
    let f = h.dim();
    for m in [rho, a] {
        if m.dim() != f {
            return Err(Error::DimensionMismatch { expected: f, found: m.dim() });
        }
    }
    let spectral = hermitian_eig(h);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let u = spectral.propagator(t).matrix;
            let heisenberg = u.adjoint().matmul(a).matmul(&u);
            rho.matmul(&heisenberg).trace()
        })
        .collect())
}

/// `Tr[|n><m| U^dagger |k><l| U] = <m|U^dagger|k> <l|U|n>` on a time grid
/// (zero-based state indices).
pub fn exact_tcf_elements(
    h: &HermitianMatrix,
    (n, m): (usize, usize),
    (k, l): (usize, usize),
    t_grid: &[f64],
) -> Result<Vec<C64>> {
    let f = h.dim();
    for idx in [n, m, k, l] {
        if idx >= f {
            return Err(Error::IndexOutOfRange { index: idx, dim: f });
        }
    }
    let spectral = hermitian_eig(h);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let u = spectral.propagator(t).matrix;
            u[(k, m)].conj() * u[(l, n)]
        })
        .collect())
}
