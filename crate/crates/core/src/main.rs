use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use greenwalk::experiments::{self, error_json, exit_code};
use greenwalk::Error;

#[derive(Parser)]
#[command(name = "greenwalk", version, about = "Green measures and time-changed compound Poisson experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Cap on worker threads.
        #[arg(long)]
        threads: Option<usize>,
        /// Directory for outputs.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List registered experiments.
    List,
    /// Check a config and print it with all defaults filled in.
    Validate { config: PathBuf },
    /// Print a starter config for an experiment.
    Example { name: String },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, threads, out } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(Error::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            let cfg = experiments::load_config(&config)?;
            let seed = experiments::seed_from_env()?;
            eprintln!("greenwalk: running '{}' from {}", cfg.experiment, config.display());
            let start = std::time::Instant::now();
            let outputs = experiments::run(&cfg, seed, &out)?;
            eprintln!(
                "greenwalk: done in {:.2}s -> {}",
                start.elapsed().as_secs_f64(),
                outputs.csv.display()
            );
            println!("{}", serde_json::to_string_pretty(&outputs)?);
        }
        Command::List => print!("{}", experiments::format_listing()),
        Command::Validate { config } => {
            let cfg = experiments::load_config(&config)?;
            let resolved = experiments::validate(&cfg, experiments::seed_from_env()?)?;
            println!("{}", serde_json::to_string_pretty(&resolved)?);
        }
        Command::Example { name } => {
            println!("{}", serde_json::to_string_pretty(&experiments::example_config(&name)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("greenwalk: {e}");
            println!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
