use clap::{Parser, Subcommand};
use poroscale_cli as cli;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "poroscale",
    version,
    about = "Two-scale upscaling simulator for reactive transport with evolving grain radii"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load from cache) the effective-coefficient table
    Tabulate { config: PathBuf },
    /// Run the coupled macroscopic simulation
    Solve { config: PathBuf },
    /// Run the identity/property verification suite
    Verify {
        /// Use the full (fine-mesh) level instead of the fast screen
        #[arg(long)]
        full: bool,
        /// Report CSV path
        #[arg(long, default_value = "verify_report.csv")]
        report: PathBuf,
    },
    /// Manufactured-solution convergence study
    Mms {
        /// One of: darcy, heat, transport, coupled
        case: String,
    },
}

fn main() {
    let args = Args::parse();
    let outcome = match args.command {
        Command::Tabulate { config } => cli::cmd_tabulate(&config),
        Command::Solve { config } => cli::cmd_solve(&config),
        Command::Verify { full, report } => cli::cmd_verify(full, &report),
        Command::Mms { case } => cli::cmd_mms(&case),
    };
    match outcome {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}
