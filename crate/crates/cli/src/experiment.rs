//! Run, convergence and validation drivers.

use std::time::{Duration, Instant};

use cpsdyn::cps::{check_constraints, gamma_w, sample_sphere, stream_rng, GammaWeight};
use cpsdyn::dynamics::{invariant_drift, trajectory, Backend};
use cpsdyn::estimators::{
    cornered_normalization, estimate_tcf, exact_mapping_check, exact_mapping_closed_form, heaviside, self_dual_moment,
    MappingPair, MethodSpec, TcfResult, WEIGHT_CONDITION_TOL,
};
use num_complex::Complex64 as C64;

use crate::config::ExperimentConfig;
use crate::{CliError, Result};

/// Outcome of one validation or oracle check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self::new(name, true, format!("skipped: {why}"))
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub result: TcfResult,
    /// Exact reference per observable, on the result grid.
    pub exact: Vec<Vec<C64>>,
    pub checks: Vec<CheckOutcome>,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `|estimate - exact|` over the standard error of the complex estimate.
/// Zero-variance estimates give `inf` unless they are exact; missing
/// standard errors give NaN.
pub fn error_ratio(estimate: C64, exact: C64, se_re: f64, se_im: f64) -> f64 {
    let err = (estimate - exact).norm();
    let se = se_re.hypot(se_im);
    if se.is_nan() {
        f64::NAN
    } else if se == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / se
    }
}

fn exact_check(cfg: &ExperimentConfig, res: &TcfResult, exact: &[Vec<C64>]) -> CheckOutcome {
    let (n_se, floor) = (cfg.validate.n_se, cfg.validate.floor);
    let mut worst: Option<(f64, usize, usize)> = None;
    let mut failures = 0usize;
    for (j, curve) in res.curves.iter().enumerate() {
        for ti in 0..res.t_grid.len() {
            let d = curve.estimate[ti] - exact[j][ti];
            // a single trajectory has no error bar; only the floor applies
            let (sr, si) = (curve.se_re[ti], curve.se_im[ti]);
            let tol_re = n_se * if sr.is_nan() { 0.0 } else { sr } + floor;
            let tol_im = n_se * if si.is_nan() { 0.0 } else { si } + floor;
            let excess = (d.re.abs() / tol_re).max(d.im.abs() / tol_im);
            if excess > 1.0 {
                failures += 1;
            }
            if worst.is_none_or(|w| excess > w.0) {
                worst = Some((excess, j, ti));
            }
        }
    }
    let (excess, j, ti) = worst.unwrap_or((0.0, 0, 0));
    let (k, l) = res.curves[j].observable;
    CheckOutcome::new(
        "exact",
        failures == 0,
        format!(
            "{failures} points outside {n_se} SE + {floor}; worst at obs {}:{} t={} uses {:.3} of its tolerance",
            k + 1,
            l + 1,
            res.t_grid[ti],
            excess
        ),
    )
}

fn positivity_check(cfg: &ExperimentConfig, res: &TcfResult) -> CheckOutcome {
    let Some(min) = res.min_contribution else {
        return CheckOutcome::skipped("positivity", "not a window-window method");
    };
    let full = (0..cfg.dim()).all(|k| res.curve((k, k)).is_some());
    let max_sum_err = if full {
        (0..res.t_grid.len())
            .map(|ti| ((0..cfg.dim()).map(|k| res.curve((k, k)).unwrap().estimate[ti].re).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let passed = min >= 0.0 && max_sum_err < 1e-12;
    let sum_note = if full { format!("max |sum_k P - 1| = {max_sum_err:.1e}") } else { "population sum not checked (partial observable set)".into() };
    CheckOutcome::new("positivity", passed, format!("min contribution {min:.3e}; {sum_note}"))
}

/// Runs the configured estimate and every validation switched on in `[validate]`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let req = cfg.request();
    let result = estimate_tcf(&req)?;
    let exact = (0..req.observables.len()).map(|j| req.exact(j)).collect::<cpsdyn::Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    if cfg.validate.exact {
        checks.push(exact_check(cfg, &result, &exact));
    }
    if cfg.validate.positivity {
        checks.push(positivity_check(cfg, &result));
    }
    if cfg.validate.mapping {
        checks.extend(mapping_checks(cfg)?);
    }
    if cfg.validate.drift {
        checks.push(drift_check(cfg)?);
    }
    if cfg.validate.moments {
        checks.extend(moment_checks(cfg)?);
    }
    Ok(RunSummary { result, exact, checks, wall_time: start.elapsed() })
}

/// Mapping identity, trajectory invariants and weight/window moments,
/// regardless of the `[validate]` switches.
pub fn oracle_suite(cfg: &ExperimentConfig) -> Result<Vec<CheckOutcome>> {
    let mut checks = mapping_checks(cfg)?;
    checks.push(drift_check(cfg)?);
    checks.extend(moment_checks(cfg)?);
    Ok(checks)
}

fn mapping_pair(method: &MethodSpec) -> Option<MappingPair> {
    match method {
        MethodSpec::Cmm { gamma } | MethodSpec::Cmmcv { gamma, .. } => Some(MappingPair::Cmm(*gamma)),
        MethodSpec::Wmm { weight } => Some(MappingPair::Wmm(weight.clone())),
        _ => None,
    }
}

fn mapping_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckOutcome>> {
    let Some(pair) = mapping_pair(&cfg.method) else {
        return Ok(vec![CheckOutcome::skipped("mapping", "method has no covariant kernel pair")]);
    };
    let dim = cfg.dim();
    let n_se = cfg.validate.n_se;
    let entries = exact_mapping_check(dim, &pair, cfg.validate.mapping_n, cfg.seed)?;
    let worst = entries.iter().map(|e| e.z_score()).fold(0.0, f64::max);
    let passed = entries.iter().all(|e| e.within(n_se));
    let mut out = vec![CheckOutcome::new(
        "mapping",
        passed,
        format!("{} index quadruples, N = {}, max |z| = {worst:.2}", entries.len(), cfg.validate.mapping_n),
    )];
    if let MappingPair::Cmm(gamma) = pair {
        let mut max_dev: f64 = 0.0;
        for e in &entries {
            max_dev = max_dev.max((exact_mapping_closed_form(dim, gamma, e.indices) - e.target).abs());
        }
        out.push(CheckOutcome::new("mapping_closed_form", max_dev < 1e-12, format!("max deviation {max_dev:.1e}")));
    }
    Ok(out)
}

fn drift_check(cfg: &ExperimentConfig) -> Result<CheckOutcome> {
    let dim = cfg.dim();
    let gamma = cfg.method.gamma().unwrap_or_else(|| gamma_w(dim));
    let tol = match cfg.backend {
        Backend::Exact => 1e-10,
        Backend::Rk4 { .. } => 1e-6,
    };
    let grid = cfg.t_grid();
    let mut worst: f64 = 0.0;
    for i in 0..cfg.validate.drift_samples {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let p = sample_sphere(dim, gamma, &mut rng)?;
        if !check_constraints(&p, 1e-12).passed() {
            return Ok(CheckOutcome::new("drift", false, "initial point off its constraint"));
        }
        let seg = trajectory(&p, &cfg.hamiltonian, &grid, cfg.backend)?;
        worst = worst.max(invariant_drift(&seg)?.max_drift());
    }
    Ok(CheckOutcome::new(
        "drift",
        worst < tol,
        format!("{} trajectories to t = {}, max drift {worst:.1e} (tolerance {tol:.0e})", cfg.validate.drift_samples, cfg.t_max),
    ))
}

fn moment_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckOutcome>> {
    let dim = cfg.dim();
    Ok(match &cfg.method {
        MethodSpec::Wmm { weight } => {
            let total = weight.total();
            let self_dual = self_dual_moment(weight, dim);
            vec![
                CheckOutcome::new("weight_total", (total - 1.0).abs() < WEIGHT_CONDITION_TOL, format!("int w = {total}")),
                CheckOutcome::new(
                    "weight_self_dual",
                    (self_dual - 1.0).abs() < WEIGHT_CONDITION_TOL,
                    format!("self-dual moment = {self_dual}"),
                ),
            ]
        }
        MethodSpec::TriangleSqc { .. } | MethodSpec::TriangleWw => {
            let total = GammaWeight::Triangle { dim }.total();
            vec![CheckOutcome::new("triangle_weight", (total - 1.0).abs() < 1e-6, format!("int w = {total}"))]
        }
        MethodSpec::CorneredSimplex { gamma } => {
            // F E[h(e_n - 1)] / N should be 1 for every n
            let n = cfg.validate.mapping_n;
            let norm = cornered_normalization(dim, *gamma);
            let mut worst: f64 = 0.0;
            for state in 0..dim {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in 0..n {
                    let mut rng = stream_rng(cfg.seed ^ 0xC0, (state * n + i) as u64);
                    let p = sample_sphere(dim, *gamma, &mut rng)?;
                    let v = dim as f64 * heaviside(p.action(0, state) - 1.0) / norm;
                    s += v;
                    s2 += v * v;
                }
                let mean = s / n as f64;
                let se = ((s2 / n as f64 - mean * mean).max(0.0) / (n as f64 - 1.0)).sqrt();
                worst = worst.max((mean - 1.0).abs() / se.max(1e-300));
            }
            vec![CheckOutcome::new(
                "window_normalization",
                worst <= cfg.validate.n_se,
                format!("max |z| = {worst:.2} over {dim} windows, N = {n}"),
            )]
        }
        _ => vec![CheckOutcome::skipped("moments", "no weight or window normalization for this method")],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n_traj: usize,
    /// Replica mean of the max-over-t absolute error.
    pub max_abs_error: f64,
    /// Replica mean of the max-over-t standard error.
    pub max_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub replicas: usize,
    /// Least-squares slope of `ln error` against `ln N`.
    pub slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Max-over-t error against the exact reference for each ensemble size.
/// Replica `r` uses seed `seed + r`.
pub fn convergence_study(cfg: &ExperimentConfig, n_traj: &[usize]) -> Result<ConvergenceTable> {
    if n_traj.len() < 3 {
        return Err(CliError::Usage(format!("a convergence study needs at least 3 ensemble sizes, got {}", n_traj.len())));
    }
    if n_traj.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("ensemble sizes must be at least 2".into()));
    }
    let replicas = cfg.converge_replicas;
    let exact_req = cfg.request_with(1, cfg.seed);
    let exact = (0..exact_req.observables.len()).map(|j| exact_req.exact(j)).collect::<cpsdyn::Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n_traj.len());
    for &n in n_traj {
        let (mut err_sum, mut se_sum) = (0.0, 0.0);
        for r in 0..replicas {
            let res = estimate_tcf(&cfg.request_with(n, cfg.seed.wrapping_add(r as u64)))?;
            let mut err: f64 = 0.0;
            let mut se: f64 = 0.0;
            for (j, curve) in res.curves.iter().enumerate() {
                for ti in 0..res.t_grid.len() {
                    err = err.max((curve.estimate[ti] - exact[j][ti]).norm());
                    se = se.max(curve.se_re[ti].hypot(curve.se_im[ti]));
                }
            }
            err_sum += err;
            se_sum += se;
        }
        rows.push(ConvergenceRow { n_traj: n, max_abs_error: err_sum / replicas as f64, max_se: se_sum / replicas as f64 });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n_traj as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.max_abs_error.ln()).collect();
    Ok(ConvergenceTable { slope: fit_slope(&x, &y), rows, replicas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn cfg(extra: &str) -> ExperimentConfig {
        let text = format!("[model]\nkind = \"two_level\"\n[method]\nname = \"cmm\"\n{extra}");
        ExperimentConfig::parse(&text, Path::new(".")).unwrap()
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1e3f64, 1e4, 1e5].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1e3f64, 1e4, 1e5].iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_ratio_edge_cases() {
        let z = C64::new(0.0, 0.0);
        assert_eq!(error_ratio(z, z, 0.0, 0.0), 0.0);
        assert_eq!(error_ratio(C64::new(1.0, 0.0), z, 0.0, 0.0), f64::INFINITY);
        assert!(error_ratio(z, z, f64::NAN, f64::NAN).is_nan());
        assert!((error_ratio(C64::new(3.0, 4.0), z, 3.0, 4.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rabi_run_passes() {
        let s = run_experiment(&cfg("[tcf]\nn_traj = 20000\n[validate]\nmapping = true\nmapping_n = 20000\ndrift = true\nmoments = true\n")).unwrap();
        assert!(s.passed(), "{:?}", s.checks);
        assert_eq!(s.checks.len(), 6);
    }

    #[test]
    fn single_trajectory_runs() {
        let s = run_experiment(&cfg("[tcf]\nn_traj = 1\n[validate]\nexact = false\n")).unwrap();
        assert!(s.passed());
        assert!(s.result.curves[0].se_re.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn convergence_needs_three_sizes() {
        assert!(matches!(convergence_study(&cfg(""), &[10, 100]), Err(CliError::Usage(_))));
    }

    #[test]
    fn oracle_suite_for_ww_and_cornered() {
        let ww = ExperimentConfig::parse(
            "[model]\nkind = \"two_level\"\n[method]\nname = \"triangle_ww\"\n[validate]\nmapping_n = 1000\n",
            Path::new("."),
        )
        .unwrap();
        let checks = oracle_suite(&ww).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        let cs = ExperimentConfig::parse(
            "[model]\nkind = \"random\"\ndim = 3\n[method]\nname = \"cornered_simplex\"\n[validate]\nmapping_n = 20000\n",
            Path::new("."),
        )
        .unwrap();
        let checks = oracle_suite(&cs).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
