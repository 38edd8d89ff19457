//! Mapping kernels: the operator-valued phase-space functions `K(X)` that
//! pair quantum operators with phase points.

use num_complex::Complex64 as C64;

use crate::cps::{classify_ascending, StiefelPoint, StiefelSignature};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, HermitianMatrix};

/// Which kernel to evaluate at a phase point.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `K = zz^dag / 2 - gamma I` on a single sphere.
    CpsCovariant { gamma: f64 },
    /// The inverse kernel paired with [`KernelSpec::CpsCovariant`].
    CpsInverse { gamma: f64 },
    /// `K = zz^dag / 2 - Gamma` with a Hermitian commutator matrix.
    Cmmcv { gamma_matrix: HermitianMatrix },
    /// The covariant kernel on the (G)DTWA component, using the point's own signature.
    Gdtwa,
    /// `K = sum_i (s_i / 2) z_i z_i^dag - gamma I`.
    StiefelCovariant(StiefelSignature),
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `[zz^dag / 2 - gamma I]_{mn}` for a single frame.
#[inline]
pub fn cps_element(z: &[C64], gamma: f64, m: usize, n: usize) -> C64 {
    0.5 * z[m] * z[n].conj() - gamma * delta(m, n)
}

/// Inverse-kernel element
/// `[(1+F) / (2 R^2)] z_m conj(z_n) - [(1-gamma)/R] delta_mn` with `R = 1 + F gamma`.
#[inline]
pub fn cps_inverse_element(z: &[C64], gamma: f64, m: usize, n: usize) -> C64 {
    let f = z.len() as f64;
    let r = 1.0 + f * gamma;
    (1.0 + f) / (2.0 * r * r) * z[m] * z[n].conj() - (1.0 - gamma) / r * delta(m, n)
}

/// Stiefel-covariant element using the point's own signature.
#[inline]
pub fn stiefel_element(point: &StiefelPoint, m: usize, n: usize) -> C64 {
    let sig = point.signature();
    let mut acc = C64::new(-sig.gamma() * delta(m, n), 0.0);
    for (i, &s) in sig.signs().iter().enumerate() {
        let z = point.frame(i);
        acc += 0.5 * s * z[m] * z[n].conj();
    }
    acc
}

fn require_rank(point: &StiefelPoint, rank: usize) -> Result<()> {
    if point.rank() != rank {
        return Err(Error::RankMismatch { expected: rank, found: point.rank() });
    }
    Ok(())
}

fn require_dim(point: &StiefelPoint, dim: usize) -> Result<()> {
    if point.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: point.dim() });
    }
    Ok(())
}

fn check_sphere(point: &StiefelPoint, gamma: f64) -> Result<()> {
    let r = 1.0 + point.dim() as f64 * gamma;
    let e: f64 = point.actions(0).iter().sum();
    let residual = (e - r).abs();
    if residual > 1e-8 * r.max(1.0) {
        return Err(Error::ConstraintViolation { residual });
    }
    Ok(())
}

/// Single matrix element `[K(X)]_{mn}`.
pub fn kernel_element(spec: &KernelSpec, point: &StiefelPoint, m: usize, n: usize) -> Result<C64> {
    let f = point.dim();
    for idx in [m, n] {
        if idx >= f {
            return Err(Error::IndexOutOfRange { index: idx, dim: f });
        }
    }
    Ok(match spec {
        KernelSpec::CpsCovariant { gamma } => {
            require_rank(point, 1)?;
            cps_element(point.frame(0), *gamma, m, n)
        }
        KernelSpec::CpsInverse { gamma } => {
            require_rank(point, 1)?;
            check_sphere(point, *gamma)?;
            cps_inverse_element(point.frame(0), *gamma, m, n)
        }
        KernelSpec::Cmmcv { gamma_matrix } => {
            require_rank(point, 1)?;
            require_dim(point, gamma_matrix.dim())?;
            let z = point.frame(0);
            0.5 * z[m] * z[n].conj() - gamma_matrix[(m, n)]
        }
        KernelSpec::Gdtwa => {
            require_rank(point, gdtwa_rank(f))?;
            stiefel_element(point, m, n)
        }
        KernelSpec::StiefelCovariant(sig) => {
            require_rank(point, sig.rank())?;
            require_dim(point, sig.dim())?;
            let mut acc = C64::new(-sig.gamma() * delta(m, n), 0.0);
            for (i, &s) in sig.signs().iter().enumerate() {
                let z = point.frame(i);
                acc += 0.5 * s * z[m] * z[n].conj();
            }
            acc
        }
    })
}

/// Full kernel matrix `K(X)`.
pub fn eval_kernel(spec: &KernelSpec, point: &StiefelPoint) -> Result<HermitianMatrix> {
    let f = point.dim();
    let mut out = CMatrix::zeros(f);
    for m in 0..f {
        for n in 0..f {
            out[(m, n)] = kernel_element(spec, point, m, n)?;
        }
    }
    Ok(HermitianMatrix::hermitize(out))
}

/// Inverse kernel of a single-sphere point at `gamma`.
pub fn eval_inverse_kernel(gamma: f64, point: &StiefelPoint) -> Result<HermitianMatrix> {
    if gamma <= -1.0 / point.dim() as f64 {
        return Err(Error::Domain(format!("gamma = {gamma} must exceed -1/F")));
    }
    eval_kernel(&KernelSpec::CpsInverse { gamma }, point)
}

/// Signature of the phase-space component on which `k` is a kernel value.
pub fn classify_kernel(k: &HermitianMatrix, degeneracy_tol: f64) -> StiefelSignature {
    let eig = hermitian_eig(k);
    classify_ascending(&eig.eigenvalues, degeneracy_tol).0
}

/// A phase point whose covariant kernel reproduces `k`.
///
/// Frame `i` is `sqrt(2 |lambda_i + gamma|) v_i` with `v_i` the eigenvector
/// (fixed phase convention) of the `i`-th signature eigenvalue.
pub fn point_from_kernel(k: &HermitianMatrix, degeneracy_tol: f64) -> StiefelPoint {
    let eig = hermitian_eig(k);
    let (sig, order) = classify_ascending(&eig.eigenvalues, degeneracy_tol);
    let f = k.dim();
    let mut frames = Vec::with_capacity(sig.rank() * f);
    for i in 0..sig.rank() {
        let scale = (2.0 * sig.frame_action(i)).sqrt();
        frames.extend(eig.eigenvector(order[i]).into_iter().map(|v| v * scale));
    }
    StiefelPoint::from_flat(sig, frames)
}

/// Frame count of the (G)DTWA component: 1 for `F = 2`, 2 for `F >= 3`.
pub fn gdtwa_rank(dim: usize) -> usize {
    if dim <= 2 {
        1
    } else {
        2
    }
}

/// `(1 +- sqrt(2F - 1)) / 2` followed by `F - 2` zeros.
pub fn gdtwa_spectrum(dim: usize) -> Vec<f64> {
    let s = (2.0 * dim as f64 - 1.0).sqrt();
    let mut v = vec![0.0; dim];
    v[0] = (1.0 + s) / 2.0;
    if dim > 1 {
        v[1] = (1.0 - s) / 2.0;
    }
    v
}

/// Number of discrete points per state, `4^(F-1)`.
pub fn gdtwa_count(dim: usize) -> usize {
    1usize << (2 * (dim - 1))
}

/// Signs `(delta_i, sigma_i)` of collective index `alpha` for the `j`-th
/// state other than `n`: bit `2j` selects `delta`, bit `2j + 1` selects `sigma`
/// (bit clear means `+1`).
pub fn gdtwa_signs(alpha: usize, j: usize) -> (f64, f64) {
    let sign = |bit: usize| if alpha >> bit & 1 == 0 { 1.0 } else { -1.0 };
    (sign(2 * j), sign(2 * j + 1))
}

/// Kernel value of discrete point `alpha` of state `n`: `1` at `(n, n)`,
/// `(delta_i + i sigma_i)/2` at `(i, n)` and its conjugate at `(n, i)`.
pub fn gdtwa_kernel(dim: usize, n: usize, alpha: usize) -> Result<HermitianMatrix> {
    if n >= dim {
        return Err(Error::IndexOutOfRange { index: n, dim });
    }
    if dim < 2 || alpha >= gdtwa_count(dim) {
        return Err(Error::Domain(format!("collective index {alpha} invalid for F = {dim}")));
    }
    let mut k = CMatrix::zeros(dim);
    k[(n, n)] = C64::new(1.0, 0.0);
    for (j, i) in (0..dim).filter(|&i| i != n).enumerate() {
        let (d, s) = gdtwa_signs(alpha, j);
        k[(i, n)] = C64::new(d, s) / 2.0;
        k[(n, i)] = C64::new(d, -s) / 2.0;
    }
    Ok(HermitianMatrix::hermitize(k))
}

/// The `4^(F-1)` discrete phase points of state `n`.
#[derive(Clone, Debug)]
pub struct DiscretePointSet {
    pub dim: usize,
    pub state: usize,
    pub points: Vec<StiefelPoint>,
    pub kernels: Vec<HermitianMatrix>,
}

pub fn gdtwa_points(dim: usize, n: usize) -> Result<DiscretePointSet> {
    let kernels = (0..gdtwa_count(dim)).map(|a| gdtwa_kernel(dim, n, a)).collect::<Result<Vec<_>>>()?;
    let points = kernels.iter().map(|k| point_from_kernel(k, crate::cps::DEGENERACY_TOL)).collect();
    Ok(DiscretePointSet { dim, state: n, points, kernels })
}
