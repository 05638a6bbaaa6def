//! `oscillant`: resonance, stability-index, symbolic-flow and simulation commands.

mod commands;
mod system;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use system::SystemArgs;

#[derive(Parser, Debug)]
#[command(name = "oscillant", version, about = "Stability analysis of highly oscillating solutions to semilinear hyperbolic systems")]
struct Cli {
    /// Exit with code 4 when a verdict is undetermined or degenerate
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate resonances and compute the stability index
    Analyze(commands::AnalyzeArgs),
    /// Check the growth bound of the frozen-coefficient flow
    Flow(commands::FlowArgs),
    /// Run one perturbed simulation and record deviation norms
    Simulate(commands::SimulateArgs),
    /// Run simulations over several epsilons and check the time scaling
    Sweep(commands::SweepArgs),
    /// Weak transparency and consistency checks of the WKB reference
    Wkb(commands::WkbArgs),
    /// List or export stock systems
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    /// Print catalog ids with their default parameters
    List,
    /// Write a catalog system as a system file
    Emit {
        id: String,
        #[command(flatten)]
        params: SystemArgs,
        /// Output path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> oscillant::Result<Outcome> {
    oscillant::io::init_thread_pool()?;
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Flow(a) => commands::flow(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Wkb(a) => commands::wkb_command(a),
        Command::Catalog { action: CatalogAction::List } => commands::catalog_list(),
        Command::Catalog { action: CatalogAction::Emit { id, params, out } } => commands::catalog_emit(id, params, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Undetermined) if cli.strict => ExitCode::from(4),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 2 } else { 3 })
        }
    }
}
