use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpsdyn_cli::output::{check_lines, convergence_csv, manifest, results_csv, write_file};
use cpsdyn_cli::{convergence_study, oracle_suite, run_experiment, with_threads, CliError, ExperimentConfig, VERSION};

#[derive(Parser)]
#[command(name = "cpsdyn", version = VERSION, about = "Trajectory estimates of quantum time-correlation functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override `tcf.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the configured correlation functions and write results.csv.
    Run { config: PathBuf },
    /// Error against the exact result as a function of ensemble size.
    Converge {
        config: PathBuf,
        /// Comma-separated ensemble sizes, e.g. 1e3,1e4,1e5.
        #[arg(long, value_delimiter = ',', value_parser = parse_count)]
        n: Option<Vec<usize>>,
    },
    /// Run the mapping, drift and moment oracles only.
    Validate { config: PathBuf },
}

fn parse_count(s: &str) -> Result<usize, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v >= 1.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as usize)
    } else {
        Err(format!("'{s}' is not a positive integer"))
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_USAGE: u8 = 1;

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli)?;
            let summary = with_threads(cli.threads, || run_experiment(&cfg))??;
            let results = write_file(&cfg.output.dir, &cfg.output.results, &results_csv(&cfg, &summary))?;
            write_file(&cfg.output.dir, &cfg.output.manifest, &manifest(&cfg, config, cli.threads, &summary))?;
            print!("{}", check_lines(&summary.checks));
            println!("wrote {}", results.display());
            Ok(summary.passed())
        }
        Command::Converge { config, n } => {
            let cfg = load(config, cli)?;
            let sizes = n.clone().unwrap_or_else(|| cfg.converge_n.clone());
            let table = with_threads(cli.threads, || convergence_study(&cfg, &sizes))??;
            let path = write_file(&cfg.output.dir, &cfg.output.convergence, &convergence_csv(&cfg, &table))?;
            for r in &table.rows {
                println!("N = {:>9}  max error {:.3e}  max SE {:.3e}", r.n_traj, r.max_abs_error, r.max_se);
            }
            println!("log-log slope {:.4}", table.slope);
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Validate { config } => {
            let cfg = load(config, cli)?;
            let checks = with_threads(cli.threads, || oracle_suite(&cfg))??;
            print!("{}", check_lines(&checks));
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
