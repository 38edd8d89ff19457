#![allow(dead_code)]

use cpsdyn::dynamics::Backend;
use cpsdyn::estimators::{estimate_tcf, MethodSpec, TcfRequest, TcfResult};
use cpsdyn::linalg::HermitianMatrix;
use cpsdyn::models::{build, ModelSpec};

pub fn grid(n: usize, t_max: f64) -> Vec<f64> {
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

/// Seeded random Hermitian matrix rescaled so that ||H|| <= 2.
pub fn bounded_random(dim: usize, seed: u64) -> HermitianMatrix {
    let h = build(&ModelSpec::Random { dim, seed, scale: 1.0 }).unwrap();
    let norm = h.spectral_norm();
    if norm > 2.0 {
        h.scaled(2.0 / norm)
    } else {
        h
    }
}

pub fn all_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).flat_map(|k| (0..dim).map(move |l| (k, l))).collect()
}

pub fn diagonal(dim: usize) -> Vec<(usize, usize)> {
    (0..dim).map(|k| (k, k)).collect()
}

pub fn request(h: HermitianMatrix, rho: (usize, usize), observables: Vec<(usize, usize)>, method: MethodSpec, n_traj: usize, seed: u64) -> TcfRequest {
    TcfRequest { hamiltonian: h, rho, observables, t_grid: grid(21, 10.0), n_traj, seed, method, backend: Backend::Exact }
}

/// Largest `|estimate - exact| - (n_se SE + floor)` over all curves, times and parts.
/// Nonpositive means every point is within tolerance.
pub fn worst_excess(req: &TcfRequest, res: &TcfResult, n_se: f64, floor: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (j, curve) in res.curves.iter().enumerate() {
        let exact = req.exact(j).unwrap();
        for ti in 0..req.t_grid.len() {
            let d = curve.estimate[ti] - exact[ti];
            worst = worst
                .max(d.re.abs() - (n_se * curve.se_re[ti] + floor))
                .max(d.im.abs() - (n_se * curve.se_im[ti] + floor));
        }
    }
    worst
}

pub fn run(req: &TcfRequest) -> TcfResult {
    estimate_tcf(req).unwrap_or_else(|e| panic!("{}: {e}", req.method.name()))
}
