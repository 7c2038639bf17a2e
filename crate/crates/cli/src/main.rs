use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mexec_cli::{cmd_check, cmd_cost, cmd_example, cmd_simulate, cmd_solve, CliError, Example, Overrides};

/// Multi-asset optimal execution with transient cross-impact.
///
/// Exit codes: 0 success, 1 other failure, 2 assumption audit failed,
/// 3 singular Riccati driver, 4 invalid scenario.
#[derive(Parser)]
#[command(name = "mexec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the number of grid steps.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Solve even when hard assumption checks fail.
    #[arg(long, global = true)]
    force: bool,
    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal strategy, deviation and hidden state as CSV.
    Solve { scenario: PathBuf, out: PathBuf },
    /// One strategy CSV per simulated path.
    Simulate { scenario: PathBuf, out_dir: PathBuf },
    /// Cost of the plan in the `X_k` columns of a CSV.
    Cost { scenario: PathBuf, plan: PathBuf },
    /// Assumption audit table.
    Check { scenario: PathBuf },
    /// Data behind a built-in example.
    Example {
        #[arg(value_enum)]
        id: Example,
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ov = Overrides { grid: cli.grid, force: cli.force, seed: cli.seed, paths: cli.paths };
    match cli.command {
        Command::Solve { scenario, out } => {
            let cost = cmd_solve(&scenario, &out, &ov)?;
            println!("optimal_cost = {cost:.16e}");
            println!("wrote {}", out.display());
        }
        Command::Simulate { scenario, out_dir } => {
            let files = cmd_simulate(&scenario, &out_dir, &ov)?;
            println!("wrote {} file(s) to {}", files.len(), out_dir.display());
        }
        Command::Cost { scenario, plan } => println!("{}", cmd_cost(&scenario, &plan, &ov)?),
        Command::Check { scenario } => {
            let report = cmd_check(&scenario, &ov)?;
            println!("{report}");
            if !report.passes_hard_checks() {
                let names: Vec<&str> = report.hard_failures().map(|e| e.name).collect();
                return Err(CliError::Audit(names.join(", ")));
            }
        }
        Command::Example { id, out_dir } => println!("wrote {}", cmd_example(id, &out_dir, &ov)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
