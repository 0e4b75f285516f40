//! `dualrail`: compile controller designs to dual-rail reaction networks,
//! analyze their stability, simulate them (as networks, rotated systems, or
//! expanded strand-displacement programs), and regenerate the full dataset
//! bundle.

use clap::{Parser, Subcommand};
use dualrail_cli::commands::{
    self, AnalyzeArgs, CompileArgs, ReproArgs, SimulateArgs,
};

#[derive(Parser)]
#[command(
    name = "dualrail",
    version,
    about = "Compiler, analyzer and simulator for dual-rail controller designs",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a design to its reaction list and matrix dump.
    Compile(CompileArgs),
    /// Run the stability decision tree and write the report.
    Analyze(AnalyzeArgs),
    /// Integrate the compiled dynamics and write trajectory + sidecar.
    Simulate(SimulateArgs),
    /// Regenerate every dataset into a dated directory.
    Repro(ReproArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile(args) => commands::cmd_compile(args),
        Command::Analyze(args) => commands::cmd_analyze(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Repro(args) => commands::cmd_repro(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
