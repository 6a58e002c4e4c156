use std::path::PathBuf;
use std::process::ExitCode;

use biotplate_cli::{run, Command, ExitStatus, RunConfig};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "biotplate", version, about = "Thin poroelastic plate homogenization pipeline")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel assembly and residuals.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the random-field diagnostics.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest number of unknowns any stage may allocate.
    #[arg(long)]
    budget_dofs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => return fail_config(&e),
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.verify.seed = seed;
    }
    if let Some(b) = cli.budget_dofs {
        cfg.solver.budget_dofs = b;
    }
    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => return fail_config(&e),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(ExitStatus::ConfigError as u8);
        }
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(ExitStatus::SolverFailure as u8);
    }

    let report = run(cli.command, &resolved, &out);
    let text = report.render();
    print!("{text}");
    let status = match std::fs::write(out.join("report.txt"), &text) {
        Ok(()) => report.exit_status(),
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            ExitStatus::SolverFailure
        }
    };
    ExitCode::from(status as u8)
}

fn fail_config(e: &biotplate_cli::ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(ExitStatus::ConfigError as u8)
}
