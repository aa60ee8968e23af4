mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

/// Convergence-rate certificates for batch Markov queues.
#[derive(Debug, Parser)]
#[command(name = "qbound", version, about)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory; overrides `output.dir` of the scenario.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write A(0), B*(0) and B**(0) as CSV (row,col,value).
    #[arg(long, global = true)]
    dump_matrix: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the certificate. Exit 0 if certified, 3 otherwise.
    #[command(after_help = "Writes certificate.json.")]
    Bound,

    /// Check the certificate against an integrated trajectory pair.
    /// Exit 0 if the bound holds on the whole grid, 2 otherwise, 3 if uncertified.
    #[command(
        after_help = "Writes pair.csv with columns t,gap1,gap_weighted,bound,holds \
                            and verify.json."
    )]
    Verify {
        /// Fail (exit 2) if doubling the truncation moves the solution by more than 1e-8.
        #[arg(long)]
        strict_truncation: bool,

        /// Replace β in the certificate (testing only).
        #[arg(long, value_name = "BETA")]
        override_beta: Option<f64>,
    },

    /// Certificates over the δ grid of the scenario.
    #[command(after_help = "Writes sweep.csv with columns delta,beta,M,prefactor,certified,best.")]
    Sweep,

    /// Compare the numeric conjugation with the closed form (classes I, III)
    /// or the dense product T·B·T⁻¹ (classes II, IV). Exit 2 on discrepancy.
    #[command(after_help = "Writes oracle.json.")]
    OracleCheck {
        /// Perturb the reference stencil (testing only).
        #[arg(long)]
        inject_bug: bool,
    },

    /// Integrate the forward system from the first state of the pair.
    #[command(after_help = "Writes trajectory.csv with columns t,p0,p1,...,pN.")]
    Simulate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_CONFIG),
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_CONFIG)
        }
    }
}
