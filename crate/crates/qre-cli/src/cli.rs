//! Argument parsing and the exit-code contract.
//!
//! Exit codes: 0 success, 1 usage/configuration/IO problems, 2 numeric
//! failures inside a run, 3 property-suite failures.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{self, Overrides};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "qre",
    version,
    about = "Entropy-regularized natural policy gradient experiments on tabular games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the configured game to a self-describing text file
    Generate(RunArgs),
    /// Run the temperature sweep on a static game, one CSV trace per tau
    Run(RunArgs),
    /// Run the sweep on a stochastic game
    RunMarkov(RunArgs),
    /// Run every property suite over seeded instances
    Verify(VerifyArgs),
    /// Re-render figures from existing trace files
    Plot(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and the QRE_OUT_DIR variable)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the generator seed of an inline game spec
    #[arg(long)]
    seed: Option<u64>,
    /// Override the temperature sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Override the step size (a number or `auto`)
    #[arg(long)]
    eta: Option<String>,
    /// Override the iteration cap
    #[arg(long)]
    iters: Option<usize>,
    /// Emit SVG figures alongside the traces
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Seeded instances per suite (heavier suites run a fraction)
    #[arg(long, default_value_t = 200)]
    seed: u64,
    /// Also write the JSON summary to this directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            tau: self.tau.clone(),
            eta: self.eta.clone(),
            iters: self.iters,
            svg: self.svg,
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(args) => {
            let cfg = config::resolve(&args.config, &args.overrides())?;
            let path = commands::cmd_generate(&cfg)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Run(args) => {
            let cfg = config::resolve(&args.config, &args.overrides())?;
            for path in commands::cmd_run(&cfg)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::RunMarkov(args) => {
            let cfg = config::resolve(&args.config, &args.overrides())?;
            for path in commands::cmd_run_markov(&cfg)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Verify(args) => {
            let (summary, failures) = commands::cmd_verify(args.seed as usize);
            println!("{summary}");
            if let Some(dir) = &args.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("verify.json"), format!("{summary}\n"))?;
            }
            if failures > 0 {
                Err(CliError::Verification(format!(
                    "{failures} property violations; see the summary above"
                )))
            } else {
                Ok(())
            }
        }
        Command::Plot(args) => {
            let cfg = config::resolve(&args.config, &args.overrides())?;
            for path in commands::cmd_plot(&cfg)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Parses the command line, runs the command, and maps the result to an
/// exit code (clap's default usage code of 2 is reserved for numeric
/// failures here, so usage errors are remapped to 1).
pub fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{err}");
            err.exit_code()
        }
    }
}
