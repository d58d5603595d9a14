//! Command line front end: each subcommand reads one TOML experiment file
//! and leaves its artifacts in the configured (or overridden) directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zorsn::harness::{cmd_attack_demo, cmd_bench, cmd_solve, cmd_verify_theory, Overrides};

#[derive(Parser)]
#[command(name = "zorsn", version, about = "Sketched Newton methods on query-counted oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file.
    config: PathBuf,
    /// Replace the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Redirect every artifact to this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            jobs: self.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem; trace CSV and summary JSON.
    Solve(RunArgs),
    /// Compare solvers over a seeded suite; per-run CSV and a table.
    Bench(RunArgs),
    /// Check stated bounds and identities; JSON report.
    VerifyTheory(RunArgs),
    /// Attack a toy classifier suite with both attack-capable methods.
    AttackDemo(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Solve(a) => cmd_solve(&a.config, &a.overrides()),
        Command::Bench(a) => cmd_bench(&a.config, &a.overrides()),
        Command::VerifyTheory(a) => cmd_verify_theory(&a.config, &a.overrides()),
        Command::AttackDemo(a) => cmd_attack_demo(&a.config, &a.overrides()),
    };
    ExitCode::from(code as u8)
}
