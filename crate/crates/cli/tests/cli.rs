//! Exercises the `cpsdyn` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn cpsdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsdyn")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const RABI: &str = "[model]\nkind = \"two_level\"\ncoupling = 1.0\n\n[method]\nname = \"cmm\"\ngamma = \"w\"\n\n[tcf]\nrho = [1, 1]\nn_traj = 100000\n";

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn rabi_run_writes_table_within_five_se() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), RABI);
    let o = cpsdyn(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("# cpsdyn results"));
    assert!(csv.contains("\n# method = cmm"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2 * 21);
    for r in &rows {
        let ratio: f64 = r[11].parse().unwrap();
        assert!(ratio <= 5.0, "{r:?}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    for key in ["version = ", "seed = 1", "method = cmm", "wall_time_s = ", "status = pass"] {
        assert!(manifest.contains(key), "{manifest}");
    }
}

#[test]
fn single_trajectory_reports_missing_se() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{}n_traj = 1\n\n[validate]\nexact = false\n", RABI.replace("n_traj = 100000\n", "")));
    let out = dir.path().join("o");
    let o = cpsdyn(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&std::fs::read_to_string(out.join("results.csv")).unwrap());
    assert!(rows.iter().all(|r| r[5] == "NA" && r[6] == "NA" && r[11] == "NA"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RABI.replace("\"cmm\"", "\"smm\""));
    let o = cpsdyn(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("method.name") && err.contains("smm"), "{err}");
    assert_eq!(cpsdyn(&["run"]).status.code(), Some(1));
    assert_eq!(cpsdyn(&["bogus"]).status.code(), Some(1));
    assert_eq!(cpsdyn(&["--version"]).status.code(), Some(0));
}

#[test]
fn failed_validation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{RABI}\n[validate]\nn_se = 1e-9\nfloor = 0.0\n"));
    let out = dir.path().join("o");
    let o = cpsdyn(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL exact"));
    assert!(std::fs::read_to_string(out.join("manifest.txt")).unwrap().contains("status = FAIL"));
}

#[test]
fn reruns_are_bitwise_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[model]\nkind = \"random\"\ndim = 3\nseed = 4\n[method]\nname = \"gdtwa\"\n[tcf]\nrho = [1, 2]\nn_traj = 20000\n",
    );
    let mut tables = Vec::new();
    for threads in ["1", "3", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = cpsdyn(&["run", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert!(tables.windows(2).all(|w| w[0] == w[1]));
    // a different seed changes the table
    let out = dir.path().join("other");
    cpsdyn(&["run", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_ne!(std::fs::read(out.join("results.csv")).unwrap(), tables[0]);
}

#[test]
fn converge_writes_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RABI);
    let out = dir.path().join("o");
    let o = cpsdyn(&["converge", &cfg, "--n", "1e3,1e4,1e5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let slope: f64 = csv.lines().find_map(|l| l.strip_prefix("# slope = ")).unwrap().parse().unwrap();
    assert!((slope + 0.5).abs() < 0.15, "{slope}");
    assert_eq!(data_rows(&csv).len(), 3);
    assert_eq!(cpsdyn(&["converge", &cfg, "--n", "1e3,1e4"]).status.code(), Some(1));
    assert_eq!(cpsdyn(&["converge", &cfg, "--n", "1e3,abc,1e5"]).status.code(), Some(1));
}

#[test]
fn validate_runs_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{RABI}\n[validate]\nmapping_n = 50000\n"));
    let o = cpsdyn(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["PASS mapping:", "PASS mapping_closed_form:", "PASS drift:"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn ehrenfest_populations_are_exact_on_rabi() {
    // a zero-variance sampler: every trajectory is the same
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RABI.replace("\"cmm\"\ngamma = \"w\"", "\"ehrenfest\"").replace("100000", "50"));
    let out = dir.path().join("o");
    let o = cpsdyn(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for r in data_rows(&std::fs::read_to_string(out.join("results.csv")).unwrap()) {
        let (re, exact): (f64, f64) = (r[3].parse().unwrap(), r[9].parse().unwrap());
        assert!((re - exact).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            cpsdyn_cli::ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 3);
}
