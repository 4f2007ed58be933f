use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opwlab::cli::commands::{EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK};
use opwlab::cli::config::parse_list;
use opwlab::cli::{inspect, run_config, sweep, ExperimentConfig, InspectFlags, SweepParam};

#[derive(Parser)]
#[command(name = "opwlab", version, about = "Operators with compactly supported spreading functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the experiment once per parameter value and write a CSV.
    Sweep {
        config: PathBuf,
        /// One of B, lambda, alpha, delta, epsilon.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Print norms and export grids of a stored operator.
    Inspect {
        operator: PathBuf,
        #[arg(long)]
        symbol: bool,
        #[arg(long)]
        spreading: bool,
        #[arg(long)]
        hs_norm: bool,
        #[arg(long)]
        check_involution: bool,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => ExperimentConfig::load(&config).and_then(|cfg| run_config(&cfg)).map(|s| {
            println!("{}", s.line());
            s.exit_code()
        }),
        Command::Sweep { config, param, values } => (|| {
            let cfg = ExperimentConfig::load(&config)?;
            let param = SweepParam::parse(&param)?;
            let values = parse_list("--values", 0, &values)?;
            let (rows, path) = sweep(&cfg, param, &values)?;
            for r in &rows {
                println!("{}={} converged={} status=\"{}\"", param.name(), r.value, r.converged, r.status);
            }
            println!("csv={}", path.display());
            Ok(if rows.iter().all(|r| r.converged) { EXIT_OK } else { EXIT_NOT_CONVERGED })
        })(),
        Command::Inspect { operator, symbol, spreading, hs_norm, check_involution } => {
            inspect(&operator, InspectFlags { symbol, spreading, hs_norm, check_involution }).map(|lines| {
                for l in lines {
                    println!("{l}");
                }
                EXIT_OK
            })
        }
    };
    match result {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("opwlab: {e}");
            exit(EXIT_ERROR)
        }
    }
}
