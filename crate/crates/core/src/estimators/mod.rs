//! Monte Carlo estimators of quantum time-correlation functions
//! `C_{nm,kl}(t) = Tr[|n><m| U^dag(t) |k><l| U(t)]`.
//!
//! State indices are zero-based throughout the library.

mod checks;
mod families;
mod method;
mod windows;

pub use checks::{
    exact_mapping_check, exact_mapping_closed_form, intra_electron_check, intra_electron_comb, self_dual_moment,
    IntraElectronReport, MappingEntry, MappingPair,
};
pub use method::{MethodSpec, TcfClass};
pub use windows::{
    cornered_normalization, eval_window, frame_with_random_phases, heaviside, hill_exponent, sample_triangle_actions,
    window_from_actions, WindowKind,
};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::cps::{stream_rng, StiefelPoint};
use crate::dynamics::{propagate, propagators, Backend};
use crate::error::{Error, Result};
use crate::linalg::{exact_tcf_elements, HermitianMatrix};
use families::Plan;

/// Upper bound on jackknife blocks.
pub const JACKKNIFE_BLOCKS: usize = 100;

/// Tolerance of the self-dual weight condition.
pub const WEIGHT_CONDITION_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TcfRequest {
    pub hamiltonian: HermitianMatrix,
    /// `(n, m)` of the initial operator `|n><m|`.
    pub rho: (usize, usize),
    /// `(k, l)` of each observable `|k><l|`.
    pub observables: Vec<(usize, usize)>,
    pub t_grid: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub method: MethodSpec,
    pub backend: Backend,
}

impl TcfRequest {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.dim();
        let (n, m) = self.rho;
        for idx in [n, m].into_iter().chain(self.observables.iter().flat_map(|&(k, l)| [k, l])) {
            if idx >= f {
                return Err(Error::IndexOutOfRange { index: idx, dim: f });
            }
        }
        if self.n_traj == 0 {
            return Err(Error::Domain("n_traj must be at least 1".into()));
        }
        if self.observables.is_empty() {
            return Err(Error::Domain("no observables requested".into()));
        }
        if self.t_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("time grid must be finite".into()));
        }
        if let Backend::Rk4 { dt } = self.backend {
            if !(dt > 0.0) {
                return Err(Error::Domain(format!("rk4 step dt = {dt} must be positive")));
            }
            if self.t_grid.iter().any(|&t| t < 0.0) || self.t_grid.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Domain("rk4 backend needs a nondecreasing, nonnegative time grid".into()));
            }
        }
        self.method.validate(f)
    }

    /// `Tr[|n><m| U^dag(t) |k><l| U(t)]` for observable `j` on the request grid.
    pub fn exact(&self, j: usize) -> Result<Vec<C64>> {
        exact_tcf_elements(&self.hamiltonian, self.rho, self.observables[j], &self.t_grid)
    }
}

/// Estimate of one observable's correlation function.
#[derive(Clone, Debug, PartialEq)]
pub struct TcfCurve {
    pub observable: (usize, usize),
    pub estimate: Vec<C64>,
    /// Jackknife standard errors of the real and imaginary parts; NaN for a
    /// single trajectory.
    pub se_re: Vec<f64>,
    pub se_im: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcfResult {
    pub method: &'static str,
    pub rho: (usize, usize),
    pub t_grid: Vec<f64>,
    pub curves: Vec<TcfCurve>,
    /// `C(t)`: the mean of `sum_k Q_{nn,kk}` for window-window families, 1 otherwise.
    pub normalization: Vec<f64>,
    pub normalization_se: Vec<f64>,
    pub n_traj: usize,
    /// Smallest per-trajectory population contribution over all states and
    /// times (window-window families).
    pub min_contribution: Option<f64>,
    /// Tally of initial density-kernel frame counts, indexed by `r`.
    pub component_counts: Option<Vec<u64>>,
}

impl TcfResult {
    pub fn curve(&self, observable: (usize, usize)) -> Option<&TcfCurve> {
        self.curves.iter().find(|c| c.observable == observable)
    }
}

/// Per-block sums of all per-trajectory samples.
struct BlockSums {
    sums: Vec<C64>,
    count: usize,
    min_contribution: f64,
    components: Vec<u64>,
}

/// Dispatches on the method class.
pub fn estimate_tcf(req: &TcfRequest) -> Result<TcfResult> {
    req.validate()?;
    let plan = Plan::new(req)?;
    run(req, &plan)
}

fn require_class(req: &TcfRequest, classes: &[TcfClass]) -> Result<()> {
    if classes.contains(&req.method.class()) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("method {} is not of the requested class", req.method.name())))
    }
}

/// Covariant-covariant families: cmm, wmm, cmmcv.
pub fn estimate_tcf_cc(req: &TcfRequest) -> Result<TcfResult> {
    require_class(req, &[TcfClass::Cc])?;
    if let MethodSpec::Wmm { weight } = &req.method {
        let moment = self_dual_moment(weight, req.dim());
        if (moment - 1.0).abs() > WEIGHT_CONDITION_TOL {
            return Err(Error::WeightCondition { moment });
        }
    }
    estimate_tcf(req)
}

/// Covariant density, windowed observable: cornered simplex.
pub fn estimate_tcf_cx(req: &TcfRequest) -> Result<TcfResult> {
    require_class(req, &[TcfClass::Cx])?;
    estimate_tcf(req)
}

/// Noncovariant density, covariant observable.
pub fn estimate_tcf_xc(req: &TcfRequest) -> Result<TcfResult> {
    require_class(req, &[TcfClass::Xc])?;
    estimate_tcf(req)
}

/// Window-window population estimators with time-dependent normalization.
pub fn estimate_tcf_ww(req: &TcfRequest) -> Result<TcfResult> {
    require_class(req, &[TcfClass::Ww])?;
    estimate_tcf(req)
}

fn block_range(b: usize, blocks: usize, n: usize) -> std::ops::Range<usize> {
    (b * n / blocks)..((b + 1) * n / blocks)
}

fn run(req: &TcfRequest, plan: &Plan) -> Result<TcfResult> {
    let f = req.dim();
    let n_t = req.t_grid.len();
    let n_obs = req.observables.len();
    let stride = n_obs + 1;
    let ww = plan.is_window_window();
    let blocks = req.n_traj.min(JACKKNIFE_BLOCKS);
    let unitaries = match req.backend {
        Backend::Exact => Some(propagators(&req.hamiltonian, &req.t_grid)),
        Backend::Rk4 { .. } => None,
    };

    let block_sums: Vec<BlockSums> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<BlockSums> {
            let mut acc = BlockSums {
                sums: vec![C64::new(0.0, 0.0); n_t * stride],
                count: 0,
                min_contribution: f64::INFINITY,
                components: vec![0; f + 1],
            };
            let mut obs = vec![C64::new(0.0, 0.0); n_obs];
            let mut q = vec![0.0; f];
            for idx in block_range(b, blocks, req.n_traj) {
                let mut rng = stream_rng(req.seed, idx as u64);
                let draw = plan.draw(&mut rng)?;
                if let Some(r) = draw.component {
                    acc.components[r] += 1;
                }
                let mut xt: StiefelPoint = draw.point.clone();
                let mut t_prev = 0.0;
                for (ti, &t) in req.t_grid.iter().enumerate() {
                    match &unitaries {
                        Some(us) => {
                            for i in 0..xt.rank() {
                                us[ti].mul_vec_into(draw.point.frame(i), xt.frame_mut(i));
                            }
                        }
                        None => {
                            xt = propagate(&xt, &req.hamiltonian, t - t_prev, req.backend)?;
                            t_prev = t;
                        }
                    }
                    let norm = plan.observe(&draw, &xt, &req.observables, &mut obs, &mut q);
                    let row = &mut acc.sums[ti * stride..(ti + 1) * stride];
                    if ww {
                        for (s, o) in row.iter_mut().zip(&obs) {
                            *s += o;
                        }
                        row[n_obs] += norm;
                        acc.min_contribution = q.iter().copied().fold(acc.min_contribution, f64::min);
                    } else {
                        for (s, o) in row.iter_mut().zip(&obs) {
                            *s += draw.weight * o;
                        }
                        row[n_obs] += norm;
                    }
                }
                acc.count += 1;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    // ordered reduction: identical for any worker count
    let mut total = vec![C64::new(0.0, 0.0); n_t * stride];
    let mut components = vec![0u64; f + 1];
    let mut min_contribution = f64::INFINITY;
    for blk in &block_sums {
        for (t, s) in total.iter_mut().zip(&blk.sums) {
            *t += s;
        }
        for (c, k) in components.iter_mut().zip(&blk.components) {
            *c += k;
        }
        min_contribution = min_contribution.min(blk.min_contribution);
    }
    let n = req.n_traj as f64;

    // estimator as a function of the summed samples and the trajectory count
    let estimate = |sums: &[C64], count: f64| -> (Vec<C64>, Vec<f64>) {
        let mut est = vec![C64::new(0.0, 0.0); n_t * n_obs];
        let mut norm = vec![0.0; n_t];
        for ti in 0..n_t {
            let row = &sums[ti * stride..(ti + 1) * stride];
            norm[ti] = row[n_obs].re / count;
            for j in 0..n_obs {
                est[ti * n_obs + j] = if ww { row[j] / row[n_obs].re } else { row[j] / count };
            }
        }
        (est, norm)
    };
    let (est, norm) = estimate(&total, n);

    // leave-one-block-out jackknife
    let (mut se_est, mut se_norm) = (vec![(f64::NAN, f64::NAN); n_t * n_obs], vec![f64::NAN; n_t]);
    if blocks > 1 {
        let replicas: Vec<(Vec<C64>, Vec<f64>)> = block_sums
            .iter()
            .map(|blk| {
                let rest: Vec<C64> = total.iter().zip(&blk.sums).map(|(t, s)| t - s).collect();
                estimate(&rest, n - blk.count as f64)
            })
            .collect();
        let bf = blocks as f64;
        let scale = (bf - 1.0) / bf;
        for i in 0..n_t * n_obs {
            let mean: C64 = replicas.iter().map(|r| r.0[i]).sum::<C64>() / bf;
            let (vr, vi) = replicas.iter().fold((0.0, 0.0), |(a, b), r| {
                let d = r.0[i] - mean;
                (a + d.re * d.re, b + d.im * d.im)
            });
            se_est[i] = ((scale * vr).sqrt(), (scale * vi).sqrt());
        }
        for ti in 0..n_t {
            let mean = replicas.iter().map(|r| r.1[ti]).sum::<f64>() / bf;
            let v: f64 = replicas.iter().map(|r| (r.1[ti] - mean).powi(2)).sum();
            se_norm[ti] = (scale * v).sqrt();
        }
    }

    let curves = req
        .observables
        .iter()
        .enumerate()
        .map(|(j, &observable)| TcfCurve {
            observable,
            estimate: (0..n_t).map(|ti| est[ti * n_obs + j]).collect(),
            se_re: (0..n_t).map(|ti| se_est[ti * n_obs + j].0).collect(),
            se_im: (0..n_t).map(|ti| se_est[ti * n_obs + j].1).collect(),
        })
        .collect();

    Ok(TcfResult {
        method: req.method.name(),
        rho: req.rho,
        t_grid: req.t_grid.clone(),
        curves,
        normalization: norm,
        normalization_se: se_norm,
        n_traj: req.n_traj,
        min_contribution: ww.then_some(min_contribution),
        component_counts: plan.records_components().then_some(components),
    })
}
