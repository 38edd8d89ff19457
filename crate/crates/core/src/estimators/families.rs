//! Per-family initial-condition samplers and observable kernels.
//!
//! Every family turns one random stream into a phase point `X_0` and a
//! weight `w` such that the ensemble mean of `w [K_A(X_t)]_{lk}` estimates
//! `Tr[|n><m| U^dag(t) |k><l| U(t)]`. The weight carries the density
//! kernel element `[K_rho(X_0)]_{mn}` together with the factor `F` of the
//! phase-space measure.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::method::MethodSpec;
use super::windows::{
    cornered_normalization, frame_with_random_phases, heaviside, sample_triangle_actions, window_from_actions,
    WindowKind,
};
use super::TcfRequest;
use crate::cps::{classify_ascending, sample_gamma, sample_sphere, StiefelPoint, StiefelSignature, DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::kernels::{cps_element, cps_inverse_element, gdtwa_count, gdtwa_points, stiefel_element, DiscretePointSet};
use crate::linalg::{hermitian_eig, CMatrix, HermitianMatrix};

/// One sampled initial condition.
pub(super) struct Draw {
    pub point: StiefelPoint,
    pub weight: C64,
    /// Sphere parameter of the observable kernel.
    pub obs_gamma: f64,
    /// `|z_n(0)|^2`, used by the single-sphere two-state transform.
    pub initial_norm: f64,
    /// Frame count of the initial density kernel (cmmcv tally).
    pub component: Option<usize>,
}

pub(super) struct Plan {
    method: MethodSpec,
    dim: usize,
    n: usize,
    m: usize,
    /// Discrete point sets for states `n` and `m` ((G)DTWA only).
    discrete: Vec<DiscretePointSet>,
    sphere: Option<StiefelSignature>,
}

/// `Gamma = gamma I + sigma G` with `G` a traceless GUE matrix
/// (unit-variance real diagonal, off-diagonal real and imaginary parts of
/// variance 1/2).
pub(super) fn sample_commutator_matrix(dim: usize, gamma: f64, sigma: f64, rng: &mut (impl Rng + ?Sized)) -> CMatrix {
    let mut g = CMatrix::zeros(dim);
    for a in 0..dim {
        g[(a, a)] = C64::new(rng.sample(StandardNormal), 0.0);
        for b in (a + 1)..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let v = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            g[(a, b)] = v;
            g[(b, a)] = v.conj();
        }
    }
    let shift = g.trace().re / dim as f64;
    for a in 0..dim {
        g[(a, a)] = C64::new(gamma + sigma * (g[(a, a)].re - shift), 0.0);
        for b in 0..dim {
            if a != b {
                g[(a, b)] *= sigma;
            }
        }
    }
    g
}

impl Plan {
    pub fn new(req: &TcfRequest) -> Result<Self> {
        let dim = req.hamiltonian.dim();
        let (n, m) = req.rho;
        let population = n == m;
        let method = req.method.clone();
        method.validate(dim)?;

        match &method {
            MethodSpec::TriangleWw | MethodSpec::TriangleF2Single { .. } | MethodSpec::HillWw { .. } => {
                let diagonal_obs = req.observables.iter().all(|&(k, l)| k == l);
                if !population || !diagonal_obs {
                    return Err(Error::Unsupported(format!(
                        "{} estimates population-population correlations only",
                        method.name()
                    )));
                }
            }
            MethodSpec::CorneredSimplex { .. } if req.observables.iter().any(|&(k, l)| k != l) => {
                return Err(Error::Unsupported("cornered_simplex windows the observable diagonal only".into()));
            }
            _ => {}
        }

        let discrete = match method {
            MethodSpec::Dtwa | MethodSpec::Gdtwa => {
                let mut sets = vec![gdtwa_points(dim, n)?];
                if !population {
                    sets.push(gdtwa_points(dim, m)?);
                }
                sets
            }
            _ => Vec::new(),
        };
        let sphere = method.gamma().map(|g| StiefelSignature::sphere(dim, g)).transpose()?;
        Ok(Self { method, dim, n, m, discrete, sphere })
    }

    pub fn is_window_window(&self) -> bool {
        matches!(self.method, MethodSpec::TriangleWw | MethodSpec::TriangleF2Single { .. } | MethodSpec::HillWw { .. })
    }

    pub fn records_components(&self) -> bool {
        matches!(self.method, MethodSpec::Cmmcv { classify: true, .. })
    }

    fn sphere_point(&self, frame: Vec<C64>) -> StiefelPoint {
        StiefelPoint::new(self.sphere.clone().expect("family has a sphere"), vec![frame]).expect("frame matches F")
    }

    pub fn draw(&self, rng: &mut (impl Rng + ?Sized)) -> Result<Draw> {
        let (f, n, m) = (self.dim, self.n, self.m);
        let ff = f as f64;
        let population = n == m;
        let mut component = None;
        let (point, weight, obs_gamma) = match &self.method {
            MethodSpec::Cmm { gamma } | MethodSpec::CorneredSimplex { gamma } => {
                let p = sample_sphere(f, *gamma, rng)?;
                let w = ff * cps_element(p.frame(0), *gamma, m, n);
                (p, w, *gamma)
            }
            MethodSpec::Wmm { weight } => {
                let d = sample_gamma(weight, rng)?;
                let p = sample_sphere(f, d.gamma, rng)?;
                let w = d.factor() * ff * cps_element(p.frame(0), d.gamma, m, n);
                (p, w, d.gamma)
            }
            MethodSpec::Cmmcv { gamma, sigma, classify } => {
                let p = sample_sphere(f, *gamma, rng)?;
                let big_gamma = sample_commutator_matrix(f, *gamma, *sigma, rng);
                let z = p.frame(0);
                let w = ff * (0.5 * z[m] * z[n].conj() - big_gamma[(m, n)]);
                if *classify {
                    let k = CMatrix::from_fn(f, |a, b| 0.5 * z[a] * z[b].conj()).sub(&big_gamma);
                    let eig = hermitian_eig(&HermitianMatrix::hermitize(k));
                    component = Some(classify_ascending(&eig.eigenvalues, DEGENERACY_TOL).0.rank());
                }
                (p, w, *gamma)
            }
            MethodSpec::TriangleSqc { fixed_gamma } => {
                // coherences sample the window of n or m with equal probability
                let window_state = if population || rng.random::<bool>() { n } else { m };
                let e = sample_triangle_actions(f, window_state, rng);
                let shell = (e.iter().sum::<f64>() - 1.0) / ff;
                let p = StiefelPoint::new(StiefelSignature::sphere(f, shell)?, vec![frame_with_random_phases(&e, rng)])?;
                let weight = if population {
                    C64::new(1.0, 0.0)
                } else {
                    let z = p.frame(0);
                    12.0 / 5.0 * 0.5 * z[m] * z[n].conj()
                };
                (p, weight, if *fixed_gamma { 1.0 / 3.0 } else { shell })
            }
            MethodSpec::Ehrenfest | MethodSpec::LambdaPoint { .. } => {
                let gamma = self.method.gamma().unwrap_or(0.0);
                let mut e = vec![gamma; f];
                if population {
                    e[n] = 1.0 + gamma;
                } else {
                    e[n] = (1.0 + 2.0 * gamma) / 2.0;
                    e[m] = e[n];
                }
                let p = self.sphere_point(frame_with_random_phases(&e, rng));
                let weight = if population {
                    C64::new(1.0, 0.0)
                } else {
                    let z = p.frame(0);
                    4.0 / (1.0 + 2.0 * gamma).powi(2) * 0.5 * z[m] * z[n].conj()
                };
                (p, weight, gamma)
            }
            MethodSpec::Dtwa | MethodSpec::Gdtwa => {
                let set = if population || rng.random::<bool>() { &self.discrete[0] } else { &self.discrete[1] };
                let alpha = rng.random_range(0..gdtwa_count(f));
                let weight = if population { C64::new(1.0, 0.0) } else { 2.0 * set.kernels[alpha][(m, n)] };
                let p = set.points[alpha].clone();
                let g = p.signature().gamma();
                (p, weight, g)
            }
            MethodSpec::TriangleWw => {
                let e = sample_triangle_actions(f, n, rng);
                let shell = (e.iter().sum::<f64>() - 1.0) / ff;
                let p = StiefelPoint::new(StiefelSignature::sphere(f, shell)?, vec![frame_with_random_phases(&e, rng)])?;
                (p, C64::new(1.0, 0.0), shell)
            }
            MethodSpec::TriangleF2Single { gamma } => {
                let p = sample_sphere(f, *gamma, rng)?;
                (p, C64::new(ff, 0.0), *gamma)
            }
            MethodSpec::HillWw { gamma } => {
                let p = sample_sphere(f, *gamma, rng)?;
                let w = ff * window_from_actions(WindowKind::HillRho, &p.actions(0), n);
                (p, C64::new(w, 0.0), *gamma)
            }
        };
        let initial_norm = point.frame(0)[n].norm_sqr();
        Ok(Draw { point, weight, obs_gamma, initial_norm, component })
    }

    /// Writes `[K_A(X_t)]_{lk}` for each requested `(k, l)` into `out`
    /// (without the weight). Window-window families also fill `q` with the
    /// per-state contributions `Q_k` (weight included) and return their sum.
    pub fn observe(&self, draw: &Draw, xt: &StiefelPoint, observables: &[(usize, usize)], out: &mut [C64], q: &mut [f64]) -> f64 {
        let f = self.dim;
        let z = xt.frame(0);
        let g = draw.obs_gamma;
        match &self.method {
            MethodSpec::Cmm { .. } | MethodSpec::Cmmcv { .. } => {
                for (o, &(k, l)) in out.iter_mut().zip(observables) {
                    *o = cps_inverse_element(z, g, l, k);
                }
            }
            MethodSpec::Wmm { .. }
            | MethodSpec::TriangleSqc { .. }
            | MethodSpec::Ehrenfest
            | MethodSpec::LambdaPoint { .. } => {
                for (o, &(k, l)) in out.iter_mut().zip(observables) {
                    *o = cps_element(z, g, l, k);
                }
            }
            MethodSpec::CorneredSimplex { gamma } => {
                let norm = cornered_normalization(f, *gamma);
                for (o, &(k, _)) in out.iter_mut().zip(observables) {
                    *o = C64::new(heaviside(0.5 * z[k].norm_sqr() - 1.0) / norm, 0.0);
                }
            }
            MethodSpec::Dtwa | MethodSpec::Gdtwa => {
                for (o, &(k, l)) in out.iter_mut().zip(observables) {
                    *o = stiefel_element(xt, l, k);
                }
            }
            MethodSpec::TriangleWw | MethodSpec::HillWw { .. } | MethodSpec::TriangleF2Single { .. } => {
                let w = draw.weight.re;
                match &self.method {
                    MethodSpec::TriangleF2Single { gamma } => {
                        let r = 1.0 + f as f64 * gamma;
                        let a0 = draw.initial_norm;
                        for (k, qk) in q.iter_mut().enumerate() {
                            let ak = z[k].norm_sqr();
                            let lo = a0.min(ak);
                            *qk = if a0 > r && ak > r { w * (2.0 - 2.0 * r * r / (lo * lo)) } else { 0.0 };
                        }
                    }
                    _ => {
                        let kind = if matches!(self.method, MethodSpec::TriangleWw) {
                            WindowKind::TriangleObs
                        } else {
                            WindowKind::HillObs
                        };
                        let e = xt.actions(0);
                        for (k, qk) in q.iter_mut().enumerate() {
                            *qk = if w == 0.0 { 0.0 } else { w * window_from_actions(kind, &e, k) };
                        }
                    }
                }
                for (o, &(k, _)) in out.iter_mut().zip(observables) {
                    *o = C64::new(q[k], 0.0);
                }
                return q.iter().sum();
            }
        }
        1.0
    }
}
