//! TOML experiment configs.
//!
//! Every lookup goes through a [`Section`] that remembers the keys it was
//! asked for, so misspelled keys are reported with their full path instead of
//! being silently ignored.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cpsdyn::cps::{gamma_w, GammaWeight};
use cpsdyn::dynamics::Backend;
use cpsdyn::estimators::{intra_electron_comb, MethodSpec, TcfRequest};
use cpsdyn::linalg::HermitianMatrix;
use cpsdyn::models::{build, ModelSpec};
use toml::{Table, Value};

use crate::{CliError, Result};

const SECTIONS: &[&str] = &["model", "method", "tcf", "validate", "output", "converge"];

const METHODS: &[&str] = &[
    "cmm",
    "wmm",
    "cmmcv",
    "cornered_simplex",
    "triangle_sqc",
    "ehrenfest",
    "lambda_point",
    "dtwa",
    "gdtwa",
    "triangle_ww",
    "triangle_f2_single",
    "hill_ww",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    /// Compare every estimate with the exact propagator.
    pub exact: bool,
    pub n_se: f64,
    /// Absolute slack added to `n_se * SE`.
    pub floor: f64,
    /// Window-window positivity and population sum.
    pub positivity: bool,
    pub mapping: bool,
    pub mapping_n: usize,
    pub drift: bool,
    pub drift_samples: usize,
    pub moments: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            exact: true,
            n_se: 5.0,
            floor: 1e-3,
            positivity: true,
            mapping: false,
            mapping_n: 100_000,
            drift: false,
            drift_samples: 8,
            moments: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub results: String,
    pub manifest: String,
    pub convergence: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            results: "results.csv".into(),
            manifest: "manifest.txt".into(),
            convergence: "convergence.csv".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub hamiltonian: HermitianMatrix,
    pub method: MethodSpec,
    /// Zero-based `(n, m)`.
    pub rho: (usize, usize),
    /// Zero-based `(k, l)` pairs.
    pub observables: Vec<(usize, usize)>,
    pub t_max: f64,
    pub n_times: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub backend: Backend,
    pub validate: ValidateConfig,
    pub output: OutputConfig,
    /// Ensemble sizes for `converge` when none are given on the command line.
    pub converge_n: Vec<usize>,
    /// Independent seeds averaged per ensemble size.
    pub converge_replicas: usize,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses a config; relative model file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
            key: "<document>".into(),
            message: e.to_string().trim_end().to_string(),
        })?;
        for (k, v) in &root {
            if !SECTIONS.contains(&k.as_str()) {
                return Err(config_err(k, format!("unknown section (expected one of {})", SECTIONS.join(", "))));
            }
            if !v.is_table() {
                return Err(config_err(k, "expected a table"));
            }
        }
        let section = |name: &'static str| Section::new(name.to_string(), root.get(name).and_then(Value::as_table));

        let model_sec = section("model");
        let model = parse_model(&model_sec, base)?;
        model_sec.finish()?;
        let hamiltonian = build(&model).map_err(|e| config_err(model_sec.path(model_key(&model)), e.to_string()))?;
        let dim = hamiltonian.dim();

        let method_sec = section("method");
        let method = parse_method(&method_sec, dim)?;
        method_sec.finish()?;
        method.validate(dim).map_err(|e| config_err("method", e.to_string()))?;

        let tcf = section("tcf");
        let rho = tcf.pair("rho", dim)?.unwrap_or((0, 0));
        let observables = match tcf.pairs("observables", dim)? {
            Some(v) => v,
            None if rho.0 == rho.1 || method.class() == cpsdyn::estimators::TcfClass::Cx => {
                (0..dim).map(|k| (k, k)).collect()
            }
            None => (0..dim).flat_map(|k| (0..dim).map(move |l| (k, l))).collect(),
        };
        let t_max = tcf.f64_or("t_max", 10.0)?;
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(config_err(tcf.path("t_max"), format!("must be positive, got {t_max}")));
        }
        let n_times = tcf.count_or("n_times", 21)?;
        if n_times < 2 {
            return Err(config_err(tcf.path("n_times"), "needs at least 2 time points"));
        }
        let n_traj = tcf.count_or("n_traj", 100_000)?;
        if n_traj < 1 {
            return Err(config_err(tcf.path("n_traj"), "needs at least 1 trajectory"));
        }
        let seed = tcf.u64_or("seed", 1)?;
        let backend = match tcf.str_or("backend", "exact")?.as_str() {
            "exact" => Backend::Exact,
            "rk4" => {
                let dt = tcf.f64_or("dt", 0.01)?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(config_err(tcf.path("dt"), format!("must be positive, got {dt}")));
                }
                Backend::Rk4 { dt }
            }
            other => return Err(config_err(tcf.path("backend"), format!("unknown backend '{other}' (expected exact or rk4)"))),
        };
        tcf.finish()?;

        let v = section("validate");
        let d = ValidateConfig::default();
        let validate = ValidateConfig {
            exact: v.bool_or("exact", d.exact)?,
            n_se: v.f64_or("n_se", d.n_se)?,
            floor: v.f64_or("floor", d.floor)?,
            positivity: v.bool_or("positivity", d.positivity)?,
            mapping: v.bool_or("mapping", d.mapping)?,
            mapping_n: v.count_or("mapping_n", d.mapping_n)?,
            drift: v.bool_or("drift", d.drift)?,
            drift_samples: v.count_or("drift_samples", d.drift_samples)?,
            moments: v.bool_or("moments", d.moments)?,
        };
        if !(validate.n_se > 0.0) || !(validate.floor >= 0.0) {
            return Err(config_err("validate", "n_se must be positive and floor nonnegative"));
        }
        if validate.mapping_n < 2 {
            return Err(config_err(v.path("mapping_n"), "needs at least 2 samples"));
        }
        v.finish()?;

        let o = section("output");
        let od = OutputConfig::default();
        let output = OutputConfig {
            dir: o.str_opt("dir")?.map(PathBuf::from).unwrap_or(od.dir),
            results: o.str_or("results", &od.results)?,
            manifest: o.str_or("manifest", &od.manifest)?,
            convergence: o.str_or("convergence", &od.convergence)?,
        };
        o.finish()?;

        let c = section("converge");
        let converge_n = match c.get("n") {
            None => vec![1_000, 10_000, 100_000],
            Some(val) => {
                let arr = val.as_array().ok_or_else(|| config_err(c.path("n"), "expected a list of ensemble sizes"))?;
                arr.iter()
                    .enumerate()
                    .map(|(i, x)| as_count(x).ok_or_else(|| config_err(format!("converge.n[{i}]"), "expected a positive integer")))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let converge_replicas = c.count_or("replicas", 4)?;
        if converge_replicas < 1 {
            return Err(config_err(c.path("replicas"), "needs at least 1 replica"));
        }
        c.finish()?;

        Ok(Self {
            model,
            hamiltonian,
            method,
            rho,
            observables,
            t_max,
            n_times,
            n_traj,
            seed,
            backend,
            validate,
            output,
            converge_n,
            converge_replicas,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn t_grid(&self) -> Vec<f64> {
        (0..self.n_times).map(|k| self.t_max * k as f64 / (self.n_times - 1) as f64).collect()
    }

    pub fn request(&self) -> TcfRequest {
        self.request_with(self.n_traj, self.seed)
    }

    pub fn request_with(&self, n_traj: usize, seed: u64) -> TcfRequest {
        TcfRequest {
            hamiltonian: self.hamiltonian.clone(),
            rho: self.rho,
            observables: self.observables.clone(),
            t_grid: self.t_grid(),
            n_traj,
            seed,
            method: self.method.clone(),
            backend: self.backend,
        }
    }

    /// One-line model description for output headers.
    pub fn model_description(&self) -> String {
        match &self.model {
            ModelSpec::TwoLevel { coupling, half_gap } => format!("two_level(coupling={coupling}, half_gap={half_gap})"),
            ModelSpec::Random { dim, seed, scale } => format!("random(F={dim}, seed={seed}, scale={scale})"),
            ModelSpec::Ladder { dim, gap, coupling } => format!("ladder(F={dim}, gap={gap}, coupling={coupling})"),
            ModelSpec::File(p) => format!("file({})", p.display()),
        }
    }
}

fn config_err(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.into(), message: message.into() }
}

fn model_key(model: &ModelSpec) -> &'static str {
    match model {
        ModelSpec::File(_) => "path",
        _ => "kind",
    }
}

/// Integer, or a float with an exact integer value (so `1e5` works).
fn as_count(v: &Value) -> Option<usize> {
    match v {
        Value::Integer(i) => usize::try_from(*i).ok(),
        Value::Float(x) if *x >= 0.0 && x.fract() == 0.0 && *x < 9.0e15 => Some(*x as usize),
        _ => None,
    }
}

struct Section<'a> {
    name: String,
    table: Option<&'a Table>,
    seen: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(name: String, table: Option<&'a Table>) -> Self {
        Self { name, table, seen: RefCell::new(BTreeSet::new()) }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.seen.borrow_mut().insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn finish(&self) -> Result<()> {
        let seen = self.seen.borrow();
        match self.table.and_then(|t| t.keys().find(|k| !seen.contains(k.as_str()))) {
            Some(k) => Err(config_err(self.path(k), "unknown key")),
            None => Ok(()),
        }
    }

    fn sub(&self, key: &str) -> Result<Option<Section<'a>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(self.path(key), Some(t)))),
            Some(_) => Err(config_err(self.path(key), "expected a table")),
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(config_err(self.path(key), "expected a number")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn count_opt(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| as_count(v).ok_or_else(|| config_err(self.path(key), "expected a nonnegative integer")))
            .transpose()
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.count_opt(key)?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(config_err(self.path(key), "expected a nonnegative integer")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(config_err(self.path(key), "expected true or false")),
        }
    }

    fn str_opt(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(config_err(self.path(key), "expected a string")),
        }
    }

    fn str_or(&self, key: &str, default: &str) -> Result<String> {
        Ok(self.str_opt(key)?.unwrap_or_else(|| default.to_string()))
    }

    /// A number, or `"w"` for the self-dual value `gamma_w(F)`.
    fn gamma_or(&self, key: &str, dim: usize, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::String(s)) if s == "w" || s == "gamma_w" => Ok(gamma_w(dim)),
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(config_err(self.path(key), "expected a number or \"w\"")),
        }
    }

    fn index_pair(&self, key: &str, v: &Value, dim: usize) -> Result<(usize, usize)> {
        let bad = || config_err(key, format!("expected a pair [a, b] of state indices in 1..={dim}"));
        let arr = v.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
        let idx = |x: &Value| -> Result<usize> {
            match x.as_integer() {
                Some(i) if i >= 1 && (i as usize) <= dim => Ok(i as usize - 1),
                _ => Err(bad()),
            }
        };
        Ok((idx(&arr[0])?, idx(&arr[1])?))
    }

    fn pair(&self, key: &str, dim: usize) -> Result<Option<(usize, usize)>> {
        self.get(key).map(|v| self.index_pair(&self.path(key), v, dim)).transpose()
    }

    fn pairs(&self, key: &str, dim: usize) -> Result<Option<Vec<(usize, usize)>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| config_err(self.path(key), "expected a list of index pairs"))?;
        if arr.is_empty() {
            return Err(config_err(self.path(key), "needs at least one pair"));
        }
        arr.iter()
            .enumerate()
            .map(|(i, x)| self.index_pair(&format!("{}[{i}]", self.path(key)), x, dim))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

fn parse_model(s: &Section, base: &Path) -> Result<ModelSpec> {
    let kind = s.str_opt("kind")?.ok_or_else(|| config_err(s.path("kind"), "required string is missing"))?;
    let dim = |s: &Section| -> Result<usize> {
        match s.count_opt("dim")? {
            Some(d) if d >= 1 => Ok(d),
            Some(_) => Err(config_err(s.path("dim"), "must be at least 1")),
            None => Err(config_err(s.path("dim"), "required integer is missing")),
        }
    };
    Ok(match kind.as_str() {
        "two_level" => ModelSpec::TwoLevel { coupling: s.f64_or("coupling", 1.0)?, half_gap: s.f64_or("half_gap", 0.0)? },
        "random" => ModelSpec::Random { dim: dim(s)?, seed: s.u64_or("seed", 0)?, scale: s.f64_or("scale", 1.0)? },
        "ladder" => ModelSpec::Ladder { dim: dim(s)?, gap: s.f64_or("gap", 1.0)?, coupling: s.f64_or("coupling", 0.0)? },
        "file" => {
            let p = s.str_opt("path")?.ok_or_else(|| config_err(s.path("path"), "required string is missing"))?;
            ModelSpec::File(base.join(p))
        }
        other => {
            return Err(config_err(
                s.path("kind"),
                format!("unknown model kind '{other}' (expected two_level, random, ladder or file)"),
            ))
        }
    })
}

fn parse_weight(s: &Section, dim: usize) -> Result<GammaWeight> {
    let kind = s.str_or("kind", "single")?;
    let numbers = |key: &str| -> Result<Vec<f64>> {
        let arr = s.get(key).and_then(Value::as_array).ok_or_else(|| config_err(s.path(key), "expected a list of numbers"))?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(k) => Ok(*k as f64),
                _ => Err(config_err(format!("{}[{i}]", s.path(key)), "expected a number")),
            })
            .collect()
    };
    let weight = match kind.as_str() {
        "single" => GammaWeight::Single(s.gamma_or("gamma", dim, gamma_w(dim))?),
        "two_point" => {
            let g = numbers("gammas")?;
            if g.len() != 2 {
                return Err(config_err(s.path("gammas"), "expected exactly two sphere labels"));
            }
            GammaWeight::two_point_self_dual(dim, g[0], g[1]).map_err(|e| config_err(s.path("gammas"), e.to_string()))?
        }
        "comb" => {
            let (g, w) = (numbers("gammas")?, numbers("weights")?);
            if g.len() != w.len() || g.is_empty() {
                return Err(config_err(s.path("weights"), "needs one weight per entry of gammas"));
            }
            GammaWeight::DeltaComb(g.into_iter().zip(w).collect())
        }
        "intra_electron" => {
            intra_electron_comb(dim, s.f64_or("gamma1", 0.0)?).map_err(|e| config_err(s.path("gamma1"), e.to_string()))?
        }
        "triangle" => GammaWeight::Triangle { dim },
        "table" => GammaWeight::Table { edges: numbers("edges")?, densities: numbers("densities")? },
        other => {
            return Err(config_err(
                s.path("kind"),
                format!("unknown weight kind '{other}' (expected single, two_point, comb, intra_electron, triangle or table)"),
            ))
        }
    };
    weight.validate(dim).map_err(|e| config_err(s.name.clone(), e.to_string()))?;
    Ok(weight)
}

fn parse_method(s: &Section, dim: usize) -> Result<MethodSpec> {
    let name = s.str_opt("name")?.ok_or_else(|| config_err(s.path("name"), "required string is missing"))?;
    let gw = gamma_w(dim);
    Ok(match name.as_str() {
        "cmm" => MethodSpec::Cmm { gamma: s.gamma_or("gamma", dim, gw)? },
        "wmm" => {
            let sub = s.sub("weight")?.ok_or_else(|| config_err(s.path("weight"), "wmm needs a [method.weight] table"))?;
            let weight = parse_weight(&sub, dim)?;
            sub.finish()?;
            MethodSpec::Wmm { weight }
        }
        "cmmcv" => MethodSpec::Cmmcv {
            gamma: s.gamma_or("gamma", dim, gw)?,
            sigma: s.f64_or("sigma", 0.0)?,
            classify: s.bool_or("classify", false)?,
        },
        "cornered_simplex" => MethodSpec::CorneredSimplex { gamma: s.gamma_or("gamma", dim, gw)? },
        "triangle_sqc" => MethodSpec::TriangleSqc { fixed_gamma: s.bool_or("fixed_gamma", false)? },
        "ehrenfest" => MethodSpec::Ehrenfest,
        "lambda_point" => MethodSpec::LambdaPoint { gamma: s.gamma_or("gamma", dim, gw)? },
        "dtwa" => MethodSpec::Dtwa,
        "gdtwa" => MethodSpec::Gdtwa,
        "triangle_ww" => MethodSpec::TriangleWw,
        "triangle_f2_single" => MethodSpec::TriangleF2Single { gamma: s.f64_or("gamma", 0.0)? },
        "hill_ww" => MethodSpec::HillWw { gamma: s.gamma_or("gamma", dim, gw)? },
        other => {
            return Err(config_err(s.path("name"), format!("unknown method '{other}' (expected one of {})", METHODS.join(", "))))
        }
    })
}
