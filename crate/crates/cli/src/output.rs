//! CSV and manifest writers.
//!
//! Everything written to `results.csv` and `convergence.csv` is a function of
//! the config alone, so reruns are byte-identical. Timing goes to the
//! manifest only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiment::{error_ratio, CheckOutcome, ConvergenceTable, RunSummary};
use crate::{CliError, Result, VERSION};

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:e}")
    }
}

fn backend_name(cfg: &ExperimentConfig) -> String {
    match cfg.backend {
        cpsdyn::dynamics::Backend::Exact => "exact".into(),
        cpsdyn::dynamics::Backend::Rk4 { dt } => format!("rk4(dt={dt})"),
    }
}

fn header(cfg: &ExperimentConfig, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# cpsdyn {title}");
    let _ = writeln!(s, "# version = {VERSION}");
    let _ = writeln!(s, "# model = {}", cfg.model_description());
    let _ = writeln!(s, "# F = {}", cfg.dim());
    let _ = writeln!(s, "# method = {} ({:?})", cfg.method.name(), cfg.method);
    let _ = writeln!(s, "# rho = {}:{}", cfg.rho.0 + 1, cfg.rho.1 + 1);
    let _ = writeln!(s, "# seed = {}", cfg.seed);
    let _ = writeln!(s, "# backend = {}", backend_name(cfg));
    let _ = writeln!(s, "# t_max = {}", cfg.t_max);
    let _ = writeln!(s, "# n_times = {}", cfg.n_times);
    s
}

/// Results table: one row per (observable, t).
pub fn results_csv(cfg: &ExperimentConfig, summary: &RunSummary) -> String {
    let res = &summary.result;
    let mut s = header(cfg, "results");
    let _ = writeln!(s, "# n_traj = {}", res.n_traj);
    let _ = writeln!(s, "rho,obs,t,re,im,se_re,se_im,cbar,cbar_se,exact_re,exact_im,err_over_se");
    let rho = format!("{}:{}", res.rho.0 + 1, res.rho.1 + 1);
    for (j, curve) in res.curves.iter().enumerate() {
        let obs = format!("{}:{}", curve.observable.0 + 1, curve.observable.1 + 1);
        for (ti, &t) in res.t_grid.iter().enumerate() {
            let (e, x) = (curve.estimate[ti], summary.exact[j][ti]);
            let ratio = error_ratio(e, x, curve.se_re[ti], curve.se_im[ti]);
            let _ = writeln!(
                s,
                "{rho},{obs},{t},{},{},{},{},{},{},{},{},{}",
                num(e.re),
                num(e.im),
                num(curve.se_re[ti]),
                num(curve.se_im[ti]),
                num(res.normalization[ti]),
                num(res.normalization_se[ti]),
                num(x.re),
                num(x.im),
                num(ratio)
            );
        }
    }
    s
}

pub fn manifest(cfg: &ExperimentConfig, config_path: &Path, threads: Option<usize>, summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version = {VERSION}");
    let _ = writeln!(s, "config = {}", config_path.display());
    let _ = writeln!(s, "method = {}", cfg.method.name());
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "n_traj = {}", cfg.n_traj);
    let _ = writeln!(s, "threads = {}", threads.map_or("default".to_string(), |t| t.to_string()));
    let _ = writeln!(s, "wall_time_s = {:.3}", summary.wall_time.as_secs_f64());
    if let Some(counts) = &summary.result.component_counts {
        let tally: Vec<String> = counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(r, c)| format!("r={r}:{c}")).collect();
        let _ = writeln!(s, "components = {}", tally.join(" "));
    }
    for c in &summary.checks {
        let _ = writeln!(s, "check.{} = {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    let _ = writeln!(s, "status = {}", if summary.passed() { "pass" } else { "FAIL" });
    s
}

pub fn convergence_csv(cfg: &ExperimentConfig, table: &ConvergenceTable) -> String {
    let mut s = header(cfg, "convergence");
    let _ = writeln!(s, "# replicas = {}", table.replicas);
    let _ = writeln!(s, "# slope = {}", num(table.slope));
    let _ = writeln!(s, "n_traj,max_abs_error,max_se");
    for r in &table.rows {
        let _ = writeln!(s, "{},{},{}", r.n_traj, num(r.max_abs_error), num(r.max_se));
    }
    s
}

pub fn check_lines(checks: &[CheckOutcome]) -> String {
    checks
        .iter()
        .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect()
}

/// Writes `contents` to `dir/name`, creating `dir` as needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}
