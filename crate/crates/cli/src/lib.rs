//! Config-driven experiment runner for `cpsdyn`.
//!
//! A run reads a TOML config (`[model]`, `[method]`, `[tcf]`, `[validate]`,
//! `[output]`, optionally `[converge]`), estimates the requested correlation
//! functions, compares them with the exact propagator and writes CSV tables.
//! State indices in configs and output files are 1-based.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ExperimentConfig, OutputConfig, ValidateConfig};
pub use experiment::{convergence_study, oracle_suite, run_experiment, CheckOutcome, ConvergenceRow, ConvergenceTable, RunSummary};

/// Version string recorded in output manifests.
pub const VERSION: &str = env!("CPSDYN_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Core(#[from] cpsdyn::Error),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
