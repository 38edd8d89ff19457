//! Phase-space trajectories. Every frame obeys `dz/dt = -i H z`; the exact
//! backend applies `U(t)` directly, the Runge-Kutta backend integrates the
//! sign-factor Hamilton equations in real coordinates.

use num_complex::Complex64 as C64;

use crate::cps::{check_constraints, StiefelPoint};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, HermitianMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Backend {
    Exact,
    Rk4 { dt: f64 },
}

impl Backend {
    /// Constraint tolerance a trajectory from this backend is held to.
    pub fn constraint_tol(&self) -> f64 {
        match self {
            Backend::Exact => 1e-8,
            Backend::Rk4 { .. } => 1e-6,
        }
    }
}

fn check_dim(point: &StiefelPoint, dim: usize) -> Result<()> {
    if point.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: point.dim() });
    }
    Ok(())
}

/// Applies `u` to every frame.
pub fn apply_unitary(point: &StiefelPoint, u: &CMatrix) -> Result<StiefelPoint> {
    point.transformed(u)
}

/// `z_i(t) = U(t) z_i(0)` for every frame.
pub fn propagate_exact(point: &StiefelPoint, h: &HermitianMatrix, t: f64) -> Result<StiefelPoint> {
    check_dim(point, h.dim())?;
    apply_unitary(point, &hermitian_eig(h).propagator(t).matrix)
}

/// Propagators `U(t_k)` on a time grid from a single diagonalization.
pub fn propagators(h: &HermitianMatrix, t_grid: &[f64]) -> Vec<CMatrix> {
    let eig = hermitian_eig(h);
    t_grid.iter().map(|&t| eig.propagator(t).matrix).collect()
}

/// `H_C(X) = sum_i (s_i/2) [x^T H_R x + p^T H_R p + 2 p^T H_I x] - gamma Tr H`.
pub fn mapping_hamiltonian(point: &StiefelPoint, h: &HermitianMatrix) -> Result<f64> {
    check_dim(point, h.dim())?;
    let f = h.dim();
    let sig = point.signature();
    let mut total = -sig.gamma() * h.as_matrix().trace().re;
    for (i, &s) in sig.signs().iter().enumerate() {
        let (x, p) = (point.x(i), point.p(i));
        let mut q = 0.0;
        for a in 0..f {
            for b in 0..f {
                let (hr, hi) = (h[(a, b)].re, h[(a, b)].im);
                q += hr * (x[a] * x[b] + p[a] * p[b]) + 2.0 * p[a] * hi * x[b];
            }
        }
        total += 0.5 * s * q;
    }
    Ok(total)
}

/// Per-frame gradients `(dH_C/dx^(i), dH_C/dp^(i))`:
/// `dH_C/dx = s (H_R x - H_I p)`, `dH_C/dp = s (H_R p + H_I x)`.
pub fn gradient(point: &StiefelPoint, h: &HermitianMatrix) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    check_dim(point, h.dim())?;
    let sig = point.signature();
    Ok((0..point.rank())
        .map(|i| frame_gradient(h, sig.signs()[i], &point.x(i), &point.p(i)))
        .collect())
}

fn frame_gradient(h: &HermitianMatrix, s: f64, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let f = x.len();
    let mut gx = vec![0.0; f];
    let mut gp = vec![0.0; f];
    for a in 0..f {
        for b in 0..f {
            let (hr, hi) = (h[(a, b)].re, h[(a, b)].im);
            gx[a] += hr * x[b] - hi * p[b];
            gp[a] += hr * p[b] + hi * x[b];
        }
        gx[a] *= s;
        gp[a] *= s;
    }
    (gx, gp)
}

/// `dx/dt = s dH_C/dp`, `dp/dt = -s dH_C/dx`, written out per frame.
fn frame_rhs(h: &HermitianMatrix, s: f64, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (gx, gp) = frame_gradient(h, s, x, p);
    (gp.iter().map(|g| s * g).collect(), gx.iter().map(|g| -s * g).collect())
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// Classic fourth-order Runge-Kutta with `steps` steps of size `dt`.
/// Constraints are not re-imposed.
pub fn propagate_rk4(point: &StiefelPoint, h: &HermitianMatrix, dt: f64, steps: usize) -> Result<StiefelPoint> {
    check_dim(point, h.dim())?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("rk4 step dt = {dt} must be positive")));
    }
    let mut out = point.clone();
    let signs = point.signature().signs().to_vec();
    for (i, &s) in signs.iter().enumerate() {
        let mut x = out.x(i);
        let mut p = out.p(i);
        for _ in 0..steps {
            let (k1x, k1p) = frame_rhs(h, s, &x, &p);
            let (k2x, k2p) = frame_rhs(h, s, &axpy(&x, dt / 2.0, &k1x), &axpy(&p, dt / 2.0, &k1p));
            let (k3x, k3p) = frame_rhs(h, s, &axpy(&x, dt / 2.0, &k2x), &axpy(&p, dt / 2.0, &k2p));
            let (k4x, k4p) = frame_rhs(h, s, &axpy(&x, dt, &k3x), &axpy(&p, dt, &k3p));
            for a in 0..x.len() {
                x[a] += dt / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a]);
                p[a] += dt / 6.0 * (k1p[a] + 2.0 * k2p[a] + 2.0 * k3p[a] + k4p[a]);
            }
        }
        for (z, (&a, &b)) in out.frame_mut(i).iter_mut().zip(x.iter().zip(&p)) {
            *z = C64::new(a, b);
        }
    }
    Ok(out)
}

/// Propagates by `t` with the given backend. Rk4 uses `ceil(|t|/dt)` equal
/// steps no longer than `dt`; negative `t` is rejected for rk4.
pub fn propagate(point: &StiefelPoint, h: &HermitianMatrix, t: f64, backend: Backend) -> Result<StiefelPoint> {
    match backend {
        Backend::Exact => propagate_exact(point, h, t),
        Backend::Rk4 { dt } => {
            if t < 0.0 {
                return Err(Error::Domain("rk4 propagation requires t >= 0".into()));
            }
            if t == 0.0 {
                return Ok(point.clone());
            }
            let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
            propagate_rk4(point, h, t / steps as f64, steps)
        }
    }
}

/// Points of one trajectory sampled on a time grid.
#[derive(Clone, Debug)]
pub struct TrajectorySegment {
    pub times: Vec<f64>,
    pub points: Vec<StiefelPoint>,
    pub backend: Backend,
    pub hamiltonian: HermitianMatrix,
}

/// Runs one trajectory from `point` at `t = 0` through a nondecreasing grid.
pub fn trajectory(point: &StiefelPoint, h: &HermitianMatrix, times: &[f64], backend: Backend) -> Result<TrajectorySegment> {
    check_dim(point, h.dim())?;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be nondecreasing".into()));
    }
    let points = match backend {
        Backend::Exact => propagators(h, times)
            .iter()
            .map(|u| apply_unitary(point, u))
            .collect::<Result<Vec<_>>>()?,
        Backend::Rk4 { .. } => {
            let mut pts = Vec::with_capacity(times.len());
            let (mut cur, mut t) = (point.clone(), 0.0);
            for &tk in times {
                cur = propagate(&cur, h, tk - t, backend)?;
                t = tk;
                pts.push(cur.clone());
            }
            pts
        }
    };
    Ok(TrajectorySegment { times: times.to_vec(), points, backend, hamiltonian: h.clone() })
}

/// Largest constraint and energy deviations along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub max_norm_residual: f64,
    pub max_overlap_residual: f64,
    pub max_energy_drift: f64,
}

impl DriftReport {
    pub fn max_drift(&self) -> f64 {
        self.max_norm_residual.max(self.max_overlap_residual).max(self.max_energy_drift)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_drift() < tol
    }
}

pub fn invariant_drift(segment: &TrajectorySegment) -> Result<DriftReport> {
    let mut report = DriftReport { max_norm_residual: 0.0, max_overlap_residual: 0.0, max_energy_drift: 0.0 };
    let Some(first) = segment.points.first() else {
        return Ok(report);
    };
    let e0 = mapping_hamiltonian(first, &segment.hamiltonian)?;
    for p in &segment.points {
        let c = check_constraints(p, 0.0);
        report.max_norm_residual = report.max_norm_residual.max(c.max_norm_residual());
        report.max_overlap_residual = report.max_overlap_residual.max(c.max_overlap_residual());
        let e = mapping_hamiltonian(p, &segment.hamiltonian)?;
        report.max_energy_drift = report.max_energy_drift.max((e - e0).abs());
    }
    Ok(report)
}
