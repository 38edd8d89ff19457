//! Phase-space identities checked by Monte Carlo: the exact mapping
//! condition and the intra-electron correlation identity.

use num_complex::Complex64 as C64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::JACKKNIFE_BLOCKS;
use crate::cps::{sample_gamma, sample_sphere, stream_rng, GammaWeight};
use crate::error::{Error, Result};
use crate::kernels::{cps_element, cps_inverse_element};
use crate::linalg::{CMatrix, HermitianMatrix};

/// Sample means and standard errors of a vector-valued statistic over
/// `n` independent streams, reduced in a fixed block order.
pub(crate) fn monte_carlo(
    n: usize,
    seed: u64,
    len: usize,
    sample: impl Fn(&mut ChaCha8Rng, &mut [C64]) -> Result<()> + Sync,
) -> Result<(Vec<C64>, Vec<f64>, Vec<f64>)> {
    let blocks = n.clamp(1, JACKKNIFE_BLOCKS);
    let parts: Vec<(Vec<C64>, Vec<f64>, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut s = vec![C64::new(0.0, 0.0); len];
            let mut s2r = vec![0.0; len];
            let mut s2i = vec![0.0; len];
            let mut buf = vec![C64::new(0.0, 0.0); len];
            for idx in (b * n / blocks)..((b + 1) * n / blocks) {
                let mut rng = stream_rng(seed, idx as u64);
                sample(&mut rng, &mut buf)?;
                for i in 0..len {
                    s[i] += buf[i];
                    s2r[i] += buf[i].re * buf[i].re;
                    s2i[i] += buf[i].im * buf[i].im;
                }
            }
            Ok((s, s2r, s2i))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s = vec![C64::new(0.0, 0.0); len];
    let mut s2r = vec![0.0; len];
    let mut s2i = vec![0.0; len];
    for (a, b, c) in &parts {
        for i in 0..len {
            s[i] += a[i];
            s2r[i] += b[i];
            s2i[i] += c[i];
        }
    }
    let nf = n as f64;
    let mean: Vec<C64> = s.iter().map(|v| v / nf).collect();
    let se = |s2: &[f64], part: fn(C64) -> f64| -> Vec<f64> {
        (0..len)
            .map(|i| {
                if n < 2 {
                    return f64::NAN;
                }
                let m = part(mean[i]);
                ((s2[i] / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
            })
            .collect()
    };
    let se_re = se(&s2r, |c| c.re);
    let se_im = se(&s2i, |c| c.im);
    Ok((mean, se_re, se_im))
}

/// Density/observable kernel pair on single spheres.
#[derive(Clone, Debug, PartialEq)]
pub enum MappingPair {
    /// `K(gamma)` with its inverse kernel.
    Cmm(f64),
    /// `K(gamma)` with itself, spheres weighted by `w(gamma)`.
    Wmm(GammaWeight),
}

/// One entry `F int dmu [K_rho]_{mn} [K_A]_{lk}` of the mapping check.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingEntry {
    /// `(m, n, l, k)`.
    pub indices: (usize, usize, usize, usize),
    pub mean: C64,
    pub se_re: f64,
    pub se_im: f64,
    /// `delta_mk delta_nl`.
    pub target: f64,
}

impl MappingEntry {
    /// Deviation from the target in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let dr = (self.mean.re - self.target).abs() / self.se_re.max(1e-300);
        let di = self.mean.im.abs() / self.se_im.max(1e-300);
        dr.max(di)
    }

    pub fn within(&self, n_se: f64) -> bool {
        (self.mean.re - self.target).abs() <= n_se * self.se_re && self.mean.im.abs() <= n_se * self.se_im
    }
}

fn quadruples(dim: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut v = Vec::with_capacity(dim.pow(4));
    for m in 0..dim {
        for n in 0..dim {
            for l in 0..dim {
                for k in 0..dim {
                    v.push((m, n, l, k));
                }
            }
        }
    }
    v
}

/// Monte Carlo estimate of `F E[[K_rho]_{mn} [K_A]_{lk}]` for every index
/// quadruple, from `n` uniform sphere draws.
pub fn exact_mapping_check(dim: usize, pair: &MappingPair, n: usize, seed: u64) -> Result<Vec<MappingEntry>> {
    match pair {
        MappingPair::Cmm(g) if !(*g > -1.0 / dim as f64) => return Err(Error::Domain(format!("gamma = {g}"))),
        MappingPair::Wmm(w) => w.validate(dim)?,
        _ => {}
    }
    let quads = quadruples(dim);
    let f = dim as f64;
    let (mean, se_re, se_im) = monte_carlo(n, seed, quads.len(), |rng, out| {
        let (gamma, factor) = match pair {
            MappingPair::Cmm(g) => (*g, 1.0),
            MappingPair::Wmm(w) => {
                let d = sample_gamma(w, rng)?;
                (d.gamma, d.factor())
            }
        };
        let p = sample_sphere(dim, gamma, rng)?;
        let z = p.frame(0);
        for (o, &(m, n, l, k)) in out.iter_mut().zip(&quads) {
            let ka = match pair {
                MappingPair::Cmm(_) => cps_inverse_element(z, gamma, l, k),
                MappingPair::Wmm(_) => cps_element(z, gamma, l, k),
            };
            *o = factor * f * cps_element(z, gamma, m, n) * ka;
        }
        Ok(())
    })?;
    Ok(quads
        .iter()
        .enumerate()
        .map(|(i, &(m, n, l, k))| MappingEntry {
            indices: (m, n, l, k),
            mean: mean[i],
            se_re: se_re[i],
            se_im: se_im[i],
            target: if m == k && n == l { 1.0 } else { 0.0 },
        })
        .collect())
}

/// `F E[K_mn K^{-1}_lk]` from the second and fourth sphere moments
/// `E[z_a conj(z_b)] = (2R/F) d_ab` and
/// `E[z_a conj(z_b) z_c conj(z_d)] = 4R^2/(F(F+1)) (d_ab d_cd + d_ad d_cb)`.
pub fn exact_mapping_closed_form(dim: usize, gamma: f64, (m, n, l, k): (usize, usize, usize, usize)) -> f64 {
    let f = dim as f64;
    let r = 1.0 + f * gamma;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let second = |a, b| 2.0 * r / f * d(a, b);
    let fourth = |a, b, c, e| 4.0 * r * r / (f * (f + 1.0)) * (d(a, b) * d(c, e) + d(a, e) * d(c, b));
    let ca = (1.0 + f) / (2.0 * r * r);
    let cb = (1.0 - gamma) / r;
    // K_mn = z_m conj(z_n)/2 - gamma d_mn, K^{-1}_lk = ca z_l conj(z_k) - cb d_lk
    let e = 0.5 * ca * fourth(m, n, l, k) - 0.5 * cb * d(l, k) * second(m, n) - gamma * ca * d(m, n) * second(l, k)
        + gamma * cb * d(m, n) * d(l, k);
    f * e
}

/// `int w(gamma) (F gamma^2 + 2 gamma) d gamma`; equals 1 for self-dual weights.
pub fn self_dual_moment(weight: &GammaWeight, dim: usize) -> f64 {
    let f = dim as f64;
    weight.moment(|g| f * g * g + 2.0 * g)
}

fn cubic_moment(weight: &GammaWeight, dim: usize) -> f64 {
    let f = dim as f64;
    weight.moment(|g| (1.0 + f * g).powi(3))
}

fn cubic_target(dim: usize) -> f64 {
    let f = dim as f64;
    (1.0 + f) * (2.0 + f) / 2.0
}

/// Two-point weight `{(g1, w1), (g2, w2)}` that is normalized, self-dual and
/// satisfies `int w (1 + F gamma)^3 = (1+F)(2+F)/2`. The weights solve the
/// 2x2 linear system for fixed `(g1, g2)`; `g2 > g1` is found by bisection.
pub fn intra_electron_comb(dim: usize, g1: f64) -> Result<GammaWeight> {
    let target = cubic_target(dim);
    let residual = |g2: f64| -> Option<f64> {
        let w = GammaWeight::two_point_self_dual(dim, g1, g2).ok()?;
        Some(cubic_moment(&w, dim) - target)
    };
    let step = 1e-2;
    let mut lo = g1 + step;
    let mut r_lo = residual(lo).ok_or_else(|| Error::InvalidWeight("singular comb".into()))?;
    let mut hi = lo;
    let mut found = false;
    while hi < g1 + 50.0 {
        hi += step;
        if let Some(r) = residual(hi) {
            if r.signum() != r_lo.signum() {
                found = true;
                break;
            }
            lo = hi;
            r_lo = r;
        }
    }
    if !found {
        return Err(Error::InvalidWeight(format!("no comb partner for gamma_1 = {g1}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid).ok_or_else(|| Error::InvalidWeight("singular comb".into()))?;
        if r.signum() == r_lo.signum() {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
        }
    }
    GammaWeight::two_point_self_dual(dim, g1, 0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntraElectronReport {
    /// `Tr[rho {A, H}] / 2`.
    pub lhs: C64,
    /// `int w F E[Tr(rho K) Tr(A K) Tr(H K)]`.
    pub rhs: C64,
    pub rhs_se_re: f64,
    pub rhs_se_im: f64,
    pub cubic_moment: f64,
    pub cubic_target: f64,
    pub cubic_satisfied: bool,
    pub self_dual_moment: f64,
}

impl IntraElectronReport {
    pub fn agrees(&self, n_se: f64) -> bool {
        (self.rhs.re - self.lhs.re).abs() <= n_se * self.rhs_se_re
            && (self.rhs.im - self.lhs.im).abs() <= n_se * self.rhs_se_im.max(1e-12)
    }
}

/// `Tr(X K) = z^dag X z / 2 - gamma Tr X`.
fn trace_with_kernel(x: &CMatrix, z: &[C64], gamma: f64) -> C64 {
    let xz = x.mul_vec(z);
    let quad: C64 = z.iter().zip(&xz).map(|(a, b)| a.conj() * b).sum();
    0.5 * quad - gamma * x.trace()
}

pub fn intra_electron_check(
    weight: &GammaWeight,
    h: &HermitianMatrix,
    rho: &HermitianMatrix,
    a: &HermitianMatrix,
    n_traj: usize,
    seed: u64,
) -> Result<IntraElectronReport> {
    let dim = h.dim();
    for m in [rho, a] {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
        }
    }
    weight.validate(dim)?;
    let (hm, rm, am) = (h.as_matrix(), rho.as_matrix(), a.as_matrix());
    let anti = am.matmul(hm).add(&hm.matmul(am));
    let lhs = 0.5 * rm.matmul(&anti).trace();
    let f = dim as f64;
    let (mean, se_re, se_im) = monte_carlo(n_traj, seed, 1, |rng, out| {
        let d = sample_gamma(weight, rng)?;
        let p = sample_sphere(dim, d.gamma, rng)?;
        let z = p.frame(0);
        out[0] = d.factor()
            * f
            * trace_with_kernel(rm, z, d.gamma)
            * trace_with_kernel(am, z, d.gamma)
            * trace_with_kernel(hm, z, d.gamma);
        Ok(())
    })?;
    let cubic = cubic_moment(weight, dim);
    let target = cubic_target(dim);
    Ok(IntraElectronReport {
        lhs,
        rhs: mean[0],
        rhs_se_re: se_re[0],
        rhs_se_im: se_im[0],
        cubic_moment: cubic,
        cubic_target: target,
        cubic_satisfied: (cubic - target).abs() <= 1e-6,
        self_dual_moment: self_dual_moment(weight, dim),
    })
}
