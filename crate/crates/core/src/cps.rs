//! Geometry of the constraint phase space: the `(2F-1)`-sphere of radius
//! `sqrt(2(1 + F gamma))` and its generalization to complex Stiefel
//! manifolds `V_r(C^F)` of scaled orthogonal `r`-frames.
//!
//! A phase point stores each frame as the complex vector `z = x + i p`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Default relative tolerance for grouping eigenvalues into degenerate classes.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Random stream for one trajectory of one experiment. The stream depends
/// only on `(seed, index)`, never on scheduling.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `gamma_w = (sqrt(1 + F) - 1) / F`.
pub fn gamma_w(dim: usize) -> f64 {
    let f = dim as f64;
    ((1.0 + f).sqrt() - 1.0) / f
}

fn check_gamma(dim: usize, gamma: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::Domain("F must be at least 1".into()));
    }
    if !gamma.is_finite() || gamma <= -1.0 / dim as f64 {
        return Err(Error::Domain(format!("gamma = {gamma} must exceed -1/F = {}", -1.0 / dim as f64)));
    }
    Ok(())
}

/// Classification of a connected phase-space component by the spectrum of
/// its mapping kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelSignature {
    dim: usize,
    /// Full kernel spectrum ordered by descending `|lambda + gamma|`; the
    /// first `rank` entries label the frames.
    eigenvalues: Vec<f64>,
    rank: usize,
    gamma: f64,
    /// `sgn(lambda_i + gamma)` for the first `rank` eigenvalues, as `±1.0`.
    signs: Vec<f64>,
    degeneracy_tol: f64,
}

impl StiefelSignature {
    /// The single-sphere component with kernel spectrum
    /// `{1 + (F-1) gamma, -gamma, ..., -gamma}`.
    pub fn sphere(dim: usize, gamma: f64) -> Result<Self> {
        check_gamma(dim, gamma)?;
        let mut eigenvalues = vec![-gamma; dim];
        eigenvalues[0] = 1.0 + (dim as f64 - 1.0) * gamma;
        Ok(Self {
            dim,
            eigenvalues,
            rank: 1,
            gamma,
            signs: vec![1.0],
            degeneracy_tol: DEGENERACY_TOL,
        })
    }

    /// Classifies an eigenvalue multiset (any order).
    pub fn from_spectrum(eigenvalues: &[f64], degeneracy_tol: f64) -> Self {
        let mut sorted = eigenvalues.to_vec();
        sorted.sort_by(f64::total_cmp);
        classify_ascending(&sorted, degeneracy_tol).0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    /// `|lambda_i + gamma|`, the action carried by frame `i`.
    pub fn frame_action(&self, i: usize) -> f64 {
        (self.eigenvalues[i] + self.gamma).abs()
    }

    /// Same component up to the tolerance used for classification.
    pub fn same_component(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self.rank == other.rank
            && self.signs == other.signs
            && (self.gamma - other.gamma).abs() <= tol
            && self.eigenvalues.iter().zip(&other.eigenvalues).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Classifies an ascending spectrum. Also returns, for each signature slot,
/// the index into `ascending` it came from.
pub(crate) fn classify_ascending(ascending: &[f64], degeneracy_tol: f64) -> (StiefelSignature, Vec<usize>) {
    let dim = ascending.len();
    let range = ascending.last().copied().unwrap_or(0.0) - ascending.first().copied().unwrap_or(0.0);
    let threshold = degeneracy_tol * range.max(1.0);

    // single-linkage grouping of the sorted spectrum
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in ascending.iter().enumerate() {
        match classes.last_mut() {
            Some(class) if l - ascending[*class.last().unwrap()] <= threshold => class.push(i),
            _ => classes.push(vec![i]),
        }
    }
    let mean = |c: &[usize]| c.iter().map(|&i| ascending[i]).sum::<f64>() / c.len() as f64;
    let d_max = classes.iter().map(Vec::len).max().unwrap_or(0);
    let chosen = classes
        .iter()
        .filter(|c| c.len() == d_max)
        .min_by(|a, b| mean(a).abs().total_cmp(&mean(b).abs()))
        .cloned()
        .unwrap_or_default();
    let gamma = 0.0 - mean(&chosen);

    // order the remaining classes by |lambda + gamma| descending, then lambda descending;
    // class means are compared with the grouping threshold so roundoff cannot flip ties
    let mut others: Vec<&Vec<usize>> = classes.iter().filter(|c| **c != chosen).collect();
    others.sort_by(|a, b| {
        let (ma, mb) = (mean(a), mean(b));
        let (wa, wb) = ((ma + gamma).abs(), (mb + gamma).abs());
        if (wa - wb).abs() > threshold {
            wb.total_cmp(&wa)
        } else {
            mb.total_cmp(&ma)
        }
    });
    let rest: Vec<usize> = others.into_iter().flatten().copied().collect();
    let rank = rest.len();
    let signs = rest.iter().map(|&i| (ascending[i] + gamma).signum()).collect();
    let order: Vec<usize> = rest.into_iter().chain(chosen).collect();
    let eigenvalues = order.iter().map(|&i| ascending[i]).collect();
    (
        StiefelSignature { dim, eigenvalues, rank, gamma, signs, degeneracy_tol },
        order,
    )
}

/// A phase point on one component: `r` frames `z^(i) = x^(i) + i p^(i)`
/// in `C^F`.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    signature: StiefelSignature,
    /// Frame-major storage, `rank * dim` entries.
    frames: Vec<C64>,
}

impl StiefelPoint {
    pub fn new(signature: StiefelSignature, frames: Vec<Vec<C64>>) -> Result<Self> {
        if frames.len() != signature.rank {
            return Err(Error::RankMismatch { expected: signature.rank, found: frames.len() });
        }
        let dim = signature.dim;
        let mut flat = Vec::with_capacity(dim * frames.len());
        for f in &frames {
            if f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: f.len() });
            }
            flat.extend_from_slice(f);
        }
        Ok(Self { signature, frames: flat })
    }

    /// Single-frame point from real coordinates and momenta.
    pub fn from_xp(signature: StiefelSignature, x: &[f64], p: &[f64]) -> Result<Self> {
        let z = x.iter().zip(p).map(|(&a, &b)| C64::new(a, b)).collect();
        Self::new(signature, vec![z])
    }

    pub(crate) fn from_flat(signature: StiefelSignature, frames: Vec<C64>) -> Self {
        debug_assert_eq!(frames.len(), signature.rank * signature.dim);
        Self { signature, frames }
    }

    pub fn signature(&self) -> &StiefelSignature {
        &self.signature
    }

    pub fn dim(&self) -> usize {
        self.signature.dim
    }

    pub fn rank(&self) -> usize {
        self.signature.rank
    }

    pub fn frame(&self, i: usize) -> &[C64] {
        let f = self.dim();
        &self.frames[i * f..(i + 1) * f]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [C64] {
        let f = self.dim();
        &mut self.frames[i * f..(i + 1) * f]
    }

    #[cfg(test)]
    pub(crate) fn frames_flat(&self) -> &[C64] {
        &self.frames
    }

    pub fn x(&self, i: usize) -> Vec<f64> {
        self.frame(i).iter().map(|z| z.re).collect()
    }

    pub fn p(&self, i: usize) -> Vec<f64> {
        self.frame(i).iter().map(|z| z.im).collect()
    }

    /// `e_n^(i) = (x_n^2 + p_n^2) / 2`.
    pub fn actions(&self, i: usize) -> Vec<f64> {
        self.frame(i).iter().map(|z| 0.5 * z.norm_sqr()).collect()
    }

    #[inline]
    pub fn action(&self, i: usize, n: usize) -> f64 {
        0.5 * self.frame(i)[n].norm_sqr()
    }

    /// Action-angle coordinates of a single-frame point.
    pub fn action_angle(&self) -> Result<ActionAngle> {
        if self.rank() != 1 {
            return Err(Error::RankMismatch { expected: 1, found: self.rank() });
        }
        let z = self.frame(0);
        Ok(ActionAngle {
            actions: z.iter().map(|z| 0.5 * z.norm_sqr()).collect(),
            angles: z.iter().map(|z| z.im.atan2(z.re).rem_euclid(2.0 * PI)).collect(),
        })
    }

    /// The group action `g . X`: every frame is multiplied by `g`.
    pub fn transformed(&self, g: &CMatrix) -> Result<Self> {
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: g.dim() });
        }
        let mut out = self.clone();
        for i in 0..self.rank() {
            g.mul_vec_into(self.frame(i), out.frame_mut(i));
        }
        Ok(out)
    }
}

/// Action-angle variables `e_n = (x_n^2 + p_n^2)/2`, `theta_n = atan2(p_n, x_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionAngle {
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
}

impl ActionAngle {
    pub fn to_frame(&self) -> Vec<C64> {
        self.actions
            .iter()
            .zip(&self.angles)
            .map(|(&e, &th)| C64::from_polar((2.0 * e.max(0.0)).sqrt(), th))
            .collect()
    }
}

fn complex_normal(rng: &mut (impl Rng + ?Sized)) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Uniform point on the sphere `sum_n |z_n|^2 / 2 = 1 + F gamma`.
pub fn sample_sphere(dim: usize, gamma: f64, rng: &mut (impl Rng + ?Sized)) -> Result<StiefelPoint> {
    let signature = StiefelSignature::sphere(dim, gamma)?;
    let radius = (2.0 * (1.0 + dim as f64 * gamma)).sqrt();
    let mut z: Vec<C64> = (0..dim).map(|_| complex_normal(rng)).collect();
    let norm = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    for v in &mut z {
        *v *= radius / norm;
    }
    Ok(StiefelPoint::from_flat(signature, z))
}

/// Haar-uniform scaled `r`-frame on the component labelled by `signature`.
///
/// Complex Gaussian columns are orthonormalized with modified Gram-Schmidt
/// (positive diagonal of `R`) and column `i` is scaled to
/// `sqrt(2 |lambda_i + gamma|)`.
pub fn sample_stiefel(signature: &StiefelSignature, rng: &mut (impl Rng + ?Sized)) -> Result<StiefelPoint> {
    let (f, r) = (signature.dim, signature.rank);
    if r == 0 || r > f {
        return Err(Error::Domain(format!("Stiefel rank r = {r} must lie in 1..={f}")));
    }
    let mut frames: Vec<C64> = (0..r * f).map(|_| complex_normal(rng)).collect();
    for i in 0..r {
        for j in 0..i {
            let (done, cur) = frames.split_at_mut(i * f);
            let qj = &done[j * f..(j + 1) * f];
            let col = &mut cur[..f];
            let proj: C64 = qj.iter().zip(col.iter()).map(|(q, c)| q.conj() * c).sum();
            for (c, q) in col.iter_mut().zip(qj) {
                *c -= proj * q;
            }
        }
        let col = &mut frames[i * f..(i + 1) * f];
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in col.iter_mut() {
            *c /= norm;
        }
    }
    for i in 0..r {
        let scale = (2.0 * signature.frame_action(i)).sqrt();
        for c in &mut frames[i * f..(i + 1) * f] {
            *c *= scale;
        }
    }
    Ok(StiefelPoint::from_flat(signature.clone(), frames))
}

/// Residuals of the norm and orthogonality constraints of a phase point.
#[derive(Clone, Debug)]
pub struct ConstraintReport {
    /// `|sum_n |z_n^(i)|^2 / 2 - |lambda_i + gamma||` per frame.
    pub norm_residuals: Vec<f64>,
    /// For each `i < j`: the real and imaginary parts of `<z^(i), z^(j)>`,
    /// i.e. `sum(x x' + p p')` and `sum(x p' - p x')`, in absolute value.
    pub overlap_residuals: Vec<((usize, usize), f64, f64)>,
    pub tol: f64,
}

impl ConstraintReport {
    pub fn max_norm_residual(&self) -> f64 {
        self.norm_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_overlap_residual(&self) -> f64 {
        self.overlap_residuals.iter().fold(0.0, |m, &(_, a, b)| m.max(a).max(b))
    }

    pub fn max_residual(&self) -> f64 {
        self.max_norm_residual().max(self.max_overlap_residual())
    }

    pub fn passed(&self) -> bool {
        self.max_residual() < self.tol
    }
}

pub fn check_constraints(point: &StiefelPoint, tol: f64) -> ConstraintReport {
    let sig = point.signature();
    let norm_residuals = (0..point.rank())
        .map(|i| {
            let e: f64 = point.frame(i).iter().map(|z| 0.5 * z.norm_sqr()).sum();
            (e - sig.frame_action(i)).abs()
        })
        .collect();
    let mut overlap_residuals = Vec::new();
    for i in 0..point.rank() {
        for j in (i + 1)..point.rank() {
            // sum_n conj(z_n^(j)) z_n^(i) = sum(x_i x_j + p_i p_j) + i sum(x_j p_i - p_j x_i)
            let ov: C64 = point.frame(i).iter().zip(point.frame(j)).map(|(a, b)| b.conj() * a).sum();
            overlap_residuals.push(((i, j), ov.re.abs(), ov.im.abs()));
        }
    }
    ConstraintReport { norm_residuals, overlap_residuals, tol }
}

/// `Omega(gamma) = [2 pi^F / (F-1)!] (2 (1 + F gamma))^(F-1)`, the volume of
/// the constraint delta-shell.
pub fn measure_norm(dim: usize, gamma: f64) -> Result<f64> {
    check_gamma(dim, gamma)?;
    let f = dim as f64;
    let factorial: f64 = (1..dim).map(|k| k as f64).product();
    Ok(2.0 * PI.powi(dim as i32) / factorial * (2.0 * (1.0 + f * gamma)).powi(dim as i32 - 1))
}

/// Signed quasi-probability distribution over sphere labels `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaWeight {
    Single(f64),
    /// `sum_i w_i delta(gamma - gamma_i)`; weights may be negative.
    DeltaComb(Vec<(f64, f64)>),
    /// Triangle-window weight `N_TW (1 + F gamma)^(F-1) / (F-1)!` on `[0, 1 - 1/F]`.
    Triangle { dim: usize },
    /// Piecewise-constant density: `densities[b]` on `[edges[b], edges[b+1])`.
    Table { edges: Vec<f64>, densities: Vec<f64> },
}

/// One draw from a [`GammaWeight`]: signed averages of `sign * magnitude * g`
/// reproduce `int w(gamma) g(gamma) d gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDraw {
    pub gamma: f64,
    pub sign: f64,
    pub magnitude: f64,
}

impl GammaDraw {
    pub fn factor(&self) -> f64 {
        self.sign * self.magnitude
    }
}

/// `N_TW = F F! / (F^F - 1)`.
pub fn triangle_normalization(dim: usize) -> f64 {
    let f = dim as f64;
    let factorial: f64 = (1..=dim).map(|k| k as f64).product();
    f * factorial / (f.powi(dim as i32) - 1.0)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

impl GammaWeight {
    /// Two-point comb `w_1 delta(gamma - g1) + w_2 delta(gamma - g2)` that is
    /// normalized and satisfies `int w (F gamma^2 + 2 gamma) = 1`.
    pub fn two_point_self_dual(dim: usize, g1: f64, g2: f64) -> Result<Self> {
        let f = dim as f64;
        let q = |g: f64| f * g * g + 2.0 * g;
        let det = q(g2) - q(g1);
        if det.abs() < 1e-12 {
            return Err(Error::InvalidWeight(format!("gamma values {g1} and {g2} give a singular system")));
        }
        let w1 = (q(g2) - 1.0) / det;
        let w2 = (1.0 - q(g1)) / det;
        Ok(Self::DeltaComb(vec![(g1, w1), (g2, w2)]))
    }

    /// Support interval `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Single(g) => (*g, *g),
            Self::DeltaComb(c) => c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(g, _)| {
                (lo.min(g), hi.max(g))
            }),
            Self::Triangle { dim } => (0.0, 1.0 - 1.0 / *dim as f64),
            Self::Table { edges, .. } => (edges[0], *edges.last().unwrap_or(&edges[0])),
        }
    }

    /// `int w(gamma) g(gamma) d gamma`.
    pub fn moment(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self {
            Self::Single(x) => g(*x),
            Self::DeltaComb(c) => c.iter().map(|&(x, w)| w * g(x)).sum(),
            Self::Triangle { dim } => {
                let f = *dim as f64;
                let norm = triangle_normalization(*dim);
                let fact: f64 = (1..*dim).map(|k| k as f64).product();
                simpson(|x| norm * (1.0 + f * x).powi(*dim as i32 - 1) / fact * g(x), 0.0, 1.0 - 1.0 / f, 4096)
            }
            Self::Table { edges, densities } => edges
                .windows(2)
                .zip(densities)
                .map(|(e, &d)| d * simpson(&g, e[0], e[1], 64))
                .sum(),
        }
    }

    pub fn total(&self) -> f64 {
        self.moment(|_| 1.0)
    }

    /// `int |w(gamma)| d gamma`.
    pub fn abs_total(&self) -> f64 {
        match self {
            Self::Single(_) => 1.0,
            Self::DeltaComb(c) => c.iter().map(|&(_, w)| w.abs()).sum(),
            Self::Triangle { .. } => self.total(),
            Self::Table { edges, densities } => {
                edges.windows(2).zip(densities).map(|(e, &d)| d.abs() * (e[1] - e[0])).sum()
            }
        }
    }

    /// Checks normalization (to `1e-8`) and that the support lies in `(-1/F, inf)`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::DeltaComb(c) if c.is_empty() => return Err(Error::InvalidWeight("empty delta comb".into())),
            Self::Triangle { dim: d } if *d != dim || dim < 2 => {
                return Err(Error::InvalidWeight(format!("triangle weight built for F = {d}, used with F = {dim}")))
            }
            Self::Table { edges, densities } => {
                if edges.len() < 2 || densities.len() + 1 != edges.len() {
                    return Err(Error::InvalidWeight("table needs n+1 edges for n densities".into()));
                }
                if edges.windows(2).any(|e| e[1] <= e[0]) {
                    return Err(Error::InvalidWeight("table edges must increase".into()));
                }
            }
            _ => {}
        }
        let abs = self.abs_total();
        if !abs.is_finite() || abs <= 0.0 {
            return Err(Error::InvalidWeight("weight cannot be normalized".into()));
        }
        let total = self.total();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidWeight(format!("total weight {total} differs from 1")));
        }
        let (lo, _) = self.support();
        if lo <= -1.0 / dim as f64 {
            return Err(Error::InvalidWeight(format!("support starts at {lo} <= -1/F")));
        }
        Ok(())
    }
}

/// Draws `gamma` from `|w| / int |w|`, carrying the sign and the magnitude
/// `int |w|` as an importance-sampling factor.
pub fn sample_gamma(weight: &GammaWeight, rng: &mut (impl Rng + ?Sized)) -> Result<GammaDraw> {
    let magnitude = weight.abs_total();
    if !magnitude.is_finite() || magnitude <= 0.0 {
        return Err(Error::InvalidWeight("weight cannot be normalized".into()));
    }
    Ok(match weight {
        GammaWeight::Single(g) => GammaDraw { gamma: *g, sign: 1.0, magnitude: 1.0 },
        GammaWeight::DeltaComb(c) => {
            let mut u = rng.random::<f64>() * magnitude;
            let mut pick = c[c.len() - 1];
            for &(g, w) in c {
                if u < w.abs() {
                    pick = (g, w);
                    break;
                }
                u -= w.abs();
            }
            GammaDraw { gamma: pick.0, sign: pick.1.signum(), magnitude }
        }
        GammaWeight::Triangle { dim } => {
            // CDF is proportional to (1 + F gamma)^F - 1 on [0, 1 - 1/F]
            let f = *dim as f64;
            let u: f64 = rng.random();
            let gamma = ((1.0 + u * (f.powi(*dim as i32) - 1.0)).powf(1.0 / f) - 1.0) / f;
            GammaDraw { gamma, sign: 1.0, magnitude }
        }
        GammaWeight::Table { edges, densities } => {
            let mut u = rng.random::<f64>() * magnitude;
            let mut bin = densities.len() - 1;
            for (b, (e, d)) in edges.windows(2).zip(densities).enumerate() {
                let mass = d.abs() * (e[1] - e[0]);
                if u < mass {
                    bin = b;
                    break;
                }
                u -= mass;
            }
            let (lo, hi) = (edges[bin], edges[bin + 1]);
            GammaDraw { gamma: lo + rng.random::<f64>() * (hi - lo), sign: densities[bin].signum(), magnitude }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_f1_fixes_action() {
        let mut rng = stream_rng(1, 0);
        for gamma in [-0.5, 0.0, 0.7, 3.0] {
            let p = sample_sphere(1, gamma, &mut rng).unwrap();
            assert!((p.action(0, 0) - (1.0 + gamma)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_constraint_each_draw() {
        let g = 1.0 / 3.0;
        assert!((gamma_w(3) - g).abs() < 1e-15);
        let mut rng = stream_rng(2, 0);
        for _ in 0..1000 {
            let p = sample_sphere(3, g, &mut rng).unwrap();
            let s: f64 = p.actions(0).iter().sum();
            assert!((s - 2.0).abs() < 1e-12);
            assert!(check_constraints(&p, 1e-9).passed());
        }
    }

    #[test]
    fn sphere_rejects_bad_gamma() {
        let mut rng = stream_rng(0, 0);
        assert!(matches!(sample_sphere(2, -0.5, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(sample_sphere(4, -0.3, &mut rng), Err(Error::Domain(_))));
        assert!(measure_norm(2, -0.6).is_err());
    }

    #[test]
    fn sphere_mean_action() {
        // E[e_n] = (1 + F gamma) / F; for F = 2, gamma = 0 it is 1/2 with Var = 1/12
        let n = 1_000_000;
        let mut rng = stream_rng(3, 0);
        let mean = (0..n).map(|_| sample_sphere(2, 0.0, &mut rng).unwrap().action(0, 0)).sum::<f64>() / n as f64;
        let se = (1.0f64 / 12.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn measure_norm_closed_form() {
        assert!((measure_norm(1, 0.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((measure_norm(2, 0.0).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        assert!((measure_norm(2, 1.0).unwrap() - 12.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn measure_norm_ring_oracle() {
        // F = 1: int dx dp delta((x^2+p^2)/2 - R) over a fine polar grid
        let r: f64 = 1.0;
        let width = 1e-4;
        let cells = 20_000;
        let dr = 4.0 * width / cells as f64;
        let rho0 = (2.0 * r).sqrt();
        let mut acc = 0.0;
        for k in 0..cells {
            let rho = rho0 - 2.0 * width + (k as f64 + 0.5) * dr;
            let e = 0.5 * rho * rho - r;
            let delta = (-(e * e) / (2.0 * (width * 0.1).powi(2))).exp() / ((2.0 * PI).sqrt() * width * 0.1);
            acc += delta * 2.0 * PI * rho * dr;
        }
        assert!((acc - measure_norm(1, 0.0).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn measure_norm_gaussian_shell_oracle() {
        // Omega(gamma) = d/dR vol{sum|z|^2/2 <= R}; estimate the shell volume
        // R in [R0 - h, R0 + h] by sampling a bounding cube in R^4.
        let mut rng = stream_rng(17, 0);
        for gamma in [0.0, 1.0] {
            let r0: f64 = 1.0 + 2.0 * gamma;
            let h = 0.05 * r0;
            let half = (2.0 * (r0 + h)).sqrt();
            let n = 2_000_000;
            let mut hits = 0usize;
            for _ in 0..n {
                let s: f64 = (0..4).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * half).map(|v| v * v).sum::<f64>() / 2.0;
                if (s - r0).abs() <= h {
                    hits += 1;
                }
            }
            let volume = hits as f64 / n as f64 * (2.0 * half).powi(4);
            let estimate = volume / (2.0 * h);
            let exact = measure_norm(2, gamma).unwrap();
            assert!((estimate / exact - 1.0).abs() < 0.01, "gamma {gamma}: {estimate} vs {exact}");
        }
    }

    #[test]
    fn sphere_moment_oracle() {
        // E[z_n conj(z_m)] = 2R/F delta_nm,
        // E[z_n conj(z_m) z_k conj(z_l)] = 4 R^2 / (F (F+1)) (d_nm d_kl + d_nl d_km)
        let (f, gamma) = (3usize, 0.4);
        let r = 1.0 + f as f64 * gamma;
        let n = 400_000;
        let mut rng = stream_rng(21, 0);
        let mut m2 = vec![vec![(0.0, 0.0); f]; f];
        let quads = [(0, 0, 0, 0), (0, 0, 1, 1), (0, 1, 1, 0), (0, 1, 0, 1)];
        let mut acc4 = vec![(C64::new(0.0, 0.0), 0.0); quads.len()];
        for _ in 0..n {
            let p = sample_sphere(f, gamma, &mut rng).unwrap();
            let z = p.frame(0);
            for a in 0..f {
                for b in 0..f {
                    let v = (z[a] * z[b].conj()).re;
                    m2[a][b].0 += v;
                    m2[a][b].1 += v * v;
                }
            }
            for (q, &(a, b, c, d)) in quads.iter().enumerate() {
                let v = z[a] * z[b].conj() * z[c] * z[d].conj();
                acc4[q].0 += v;
                acc4[q].1 += v.norm_sqr();
            }
        }
        let nf = n as f64;
        for a in 0..f {
            for b in 0..f {
                let mean = m2[a][b].0 / nf;
                let se = ((m2[a][b].1 / nf - mean * mean) / nf).sqrt();
                let exact = if a == b { 2.0 * r / f as f64 } else { 0.0 };
                assert!((mean - exact).abs() < 5.0 * se + 1e-12, "({a},{b}) {mean} vs {exact}");
            }
        }
        let c4 = 4.0 * r * r / (f as f64 * (f as f64 + 1.0));
        let d = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
        for (q, &(a, b, c, dd)) in quads.iter().enumerate() {
            let mean = acc4[q].0 / nf;
            let se = ((acc4[q].1 / nf - mean.norm_sqr()) / nf).sqrt();
            let exact = c4 * (d(a, b) * d(c, dd) + d(a, dd) * d(c, b));
            assert!((mean - exact).norm() < 5.0 * se, "{:?}: {mean} vs {exact}", quads[q]);
        }
    }

    #[test]
    fn stiefel_full_rank_is_scaled_unitary() {
        let sig = StiefelSignature::from_spectrum(&[3.0, 1.0, -0.5, 0.25], DEGENERACY_TOL);
        // every eigenvalue distinct: tie on degeneracy 1, gamma = -(smallest |lambda|)
        assert_eq!(sig.rank(), 3);
        let mut rng = stream_rng(4, 0);
        let p = sample_stiefel(&sig, &mut rng).unwrap();
        assert!(check_constraints(&p, 1e-10).passed());

        let sig = StiefelSignature {
            dim: 3,
            eigenvalues: vec![1.0, 2.0, 3.0],
            rank: 3,
            gamma: 0.0,
            signs: vec![1.0; 3],
            degeneracy_tol: DEGENERACY_TOL,
        };
        let p = sample_stiefel(&sig, &mut rng).unwrap();
        let report = check_constraints(&p, 1e-10);
        assert!(report.max_overlap_residual() < 1e-10);
        assert!(report.passed());
    }

    #[test]
    fn stiefel_gdtwa_f3_norms() {
        let s5 = 5f64.sqrt();
        let sig = StiefelSignature::from_spectrum(&[(1.0 + s5) / 2.0, (1.0 - s5) / 2.0, 0.0], DEGENERACY_TOL);
        assert_eq!(sig.rank(), 2);
        assert_eq!(sig.gamma(), 0.0);
        assert_eq!(sig.signs(), &[1.0, -1.0]);
        let mut rng = stream_rng(8, 0);
        let p = sample_stiefel(&sig, &mut rng).unwrap();
        let norms: Vec<f64> = (0..2).map(|i| p.actions(i).iter().sum()).collect();
        assert!((norms[0] - (1.0 + s5) / 2.0).abs() < 1e-10);
        assert!((norms[1] - (s5 - 1.0) / 2.0).abs() < 1e-10);
        assert!(check_constraints(&p, 1e-10).passed());
    }

    #[test]
    fn stiefel_rank_one_matches_sphere() {
        // two-sample Kolmogorov-Smirnov on e_1, alpha = 0.01
        let sig = StiefelSignature::sphere(3, 0.2).unwrap();
        let n = 20_000;
        let mut rng = stream_rng(31, 0);
        let mut a: Vec<f64> = (0..n).map(|_| sample_stiefel(&sig, &mut rng).unwrap().action(0, 0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| sample_sphere(3, 0.2, &mut rng).unwrap().action(0, 0)).collect();
        assert!(ks_statistic(&mut a, &mut b) < 1.628 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn stiefel_unitary_invariance() {
        use crate::linalg::{hermitian_eig, HermitianMatrix};
        let sig = StiefelSignature::from_spectrum(&[2.0, -1.0, 0.0, 0.0], DEGENERACY_TOL);
        assert_eq!(sig.rank(), 2);
        let mut rng = stream_rng(44, 0);
        let g = {
            let m = CMatrix::from_fn(4, |_, _| complex_normal(&mut rng));
            hermitian_eig(&HermitianMatrix::hermitize(m.add(&m.adjoint()))).propagator(0.9).matrix
        };
        let n = 100_000;
        for frame in 0..2 {
            for state in 0..4 {
                let mut a = Vec::with_capacity(n);
                let mut b = Vec::with_capacity(n);
                for _ in 0..n {
                    let p = sample_stiefel(&sig, &mut rng).unwrap();
                    a.push(p.action(frame, state));
                    let q = sample_stiefel(&sig, &mut rng).unwrap().transformed(&g).unwrap();
                    b.push(q.action(frame, state));
                }
                assert!(ks_statistic(&mut a, &mut b) < 1.628 * (2.0 / n as f64).sqrt());
            }
        }
    }

    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn constraint_violation_detected() {
        let sig = StiefelSignature::sphere(2, 0.0).unwrap();
        let p = StiefelPoint::from_xp(sig.clone(), &[2f64.sqrt() * 1.01, 0.0], &[0.0, 0.0]).unwrap();
        let report = check_constraints(&p, 1e-9);
        assert!(!report.passed());
        assert!((report.norm_residuals[0] - 0.0201).abs() < 1e-12);
    }

    #[test]
    fn swapped_frames_still_pass() {
        let sig = StiefelSignature::from_spectrum(&[1.5, -1.5, 0.0], DEGENERACY_TOL);
        assert_eq!(sig.rank(), 2);
        let mut rng = stream_rng(5, 0);
        let p = sample_stiefel(&sig, &mut rng).unwrap();
        let swapped = StiefelPoint::new(sig, vec![p.frame(1).to_vec(), p.frame(0).to_vec()]).unwrap();
        assert!(check_constraints(&swapped, 1e-9).passed());
    }

    #[test]
    fn gamma_weights() {
        let mut rng = stream_rng(6, 0);
        assert_eq!(
            sample_gamma(&GammaWeight::Single(0.3), &mut rng).unwrap(),
            GammaDraw { gamma: 0.3, sign: 1.0, magnitude: 1.0 }
        );
        assert!((triangle_normalization(2) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(GammaWeight::Triangle { dim: 2 }.support(), (0.0, 0.5));

        let comb = GammaWeight::DeltaComb(vec![(0.0, 2.0), (1.0, -1.0)]);
        assert!((comb.total() - 1.0).abs() < 1e-15);
        assert_eq!(comb.abs_total(), 3.0);
        let n = 300_000;
        let mut first = 0usize;
        let mut signed = 0.0;
        for _ in 0..n {
            let d = sample_gamma(&comb, &mut rng).unwrap();
            if d.gamma == 0.0 {
                first += 1;
            }
            signed += d.factor();
        }
        let frac = first as f64 / n as f64;
        let se = (2.0 / 9.0 / n as f64).sqrt();
        assert!((frac - 2.0 / 3.0).abs() < 5.0 * se);
        assert!((signed / n as f64 - 1.0).abs() < 5.0 * 3.0 * (8.0 / 9.0 / n as f64).sqrt());
    }

    #[test]
    fn triangle_weight_integrates_to_one() {
        for f in 2..7 {
            let w = GammaWeight::Triangle { dim: f };
            assert!((w.total() - 1.0).abs() < 1e-8);
            w.validate(f).unwrap();
        }
    }

    #[test]
    fn triangle_sampler_matches_cdf() {
        let w = GammaWeight::Triangle { dim: 3 };
        let mut rng = stream_rng(7, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| sample_gamma(&w, &mut rng).unwrap().gamma).sum::<f64>() / n as f64;
        let exact = w.moment(|g| g);
        let var = w.moment(|g| g * g) - exact * exact;
        assert!((mean - exact).abs() < 5.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn weight_validation() {
        assert!(GammaWeight::DeltaComb(vec![(0.0, 0.5)]).validate(2).is_err());
        assert!(GammaWeight::DeltaComb(vec![(-0.6, 1.0)]).validate(2).is_err());
        let table = GammaWeight::Table { edges: vec![0.0, 0.5, 1.0], densities: vec![3.0, -1.0] };
        table.validate(2).unwrap();
        assert!((table.abs_total() - 2.0).abs() < 1e-15);
        let two = GammaWeight::two_point_self_dual(2, 0.0, 1.0).unwrap();
        assert!((two.total() - 1.0).abs() < 1e-14);
        assert!((two.moment(|g| 2.0 * g * g + 2.0 * g) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn action_angle_round_trip() {
        let mut rng = stream_rng(9, 0);
        let p = sample_sphere(4, 0.1, &mut rng).unwrap();
        let aa = p.action_angle().unwrap();
        assert!((aa.actions.iter().sum::<f64>() - 1.4).abs() < 1e-12);
        assert!(aa.angles.iter().all(|&t| (0.0..2.0 * PI).contains(&t)));
        for (a, b) in aa.to_frame().iter().zip(p.frame(0)) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
