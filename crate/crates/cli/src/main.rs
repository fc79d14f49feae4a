use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use satl_cli::{dispatch, CliError, JobKind, Request};

/// Steady states, spectra, trajectories and pump sweeps of single-atom laser models.
#[derive(Debug, Parser)]
#[command(name = "satl", version)]
struct Args {
    /// Job to run.
    #[arg(value_enum)]
    job: JobKind,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Trajectory seed (overrides `trajectory.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        if let Err(e) = pool.map_err(|e| CliError::Config { line: None, message: format!("--threads {n}: {e}") }) {
            eprintln!("{}", e.to_json());
            return ExitCode::from(e.exit_code());
        }
    }
    let outcome = dispatch(&Request {
        job: Some(args.job),
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    });
    if let Some(line) = outcome.summary {
        println!("{line}");
    }
    if let Some(err) = outcome.error {
        eprintln!("{err}");
    }
    ExitCode::from(outcome.exit_code)
}
