//! `spectr` -- training-free LoRA expert routing from the command line.
//!
//! * `align`    rewrite a raw adapter bundle into spectrally aligned form
//! * `route`    score token vectors against an aligned bundle
//! * `simulate` run the synthetic routing experiments, emit CSVs
//! * `sweep`    simulate with the rank list front and center
//! * `inspect`  dump a bundle header without touching the payload
//!
//! Exit codes: 0 success, 2 input/parse error, 3 semantic/validation
//! error. All randomness flows from `--seed`; identical invocations
//! produce byte-identical output.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_align, cmd_inspect, cmd_route, cmd_simulate};
use config::{ConfigError, RunConfig};
use spectr_core::Error;

/// Anything a subcommand can fail with, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Config file or flag value we could not parse (exit 2).
    Config(ConfigError),
    /// Other unreadable/unparseable input, e.g. vector files (exit 2).
    Input(String),
    /// The engine rejected well-formed input; bundle parse errors keep
    /// exit 2, everything else is a semantic error (exit 3).
    Engine(Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Engine(Error::Bundle(_)) => 2,
            CliError::Engine(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Input(msg) => f.write_str(msg),
            CliError::Engine(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

#[derive(Parser)]
#[command(
    name = "spectr",
    version,
    about = "Training-free LoRA expert routing: align bundles, route tokens, run experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides shared by the experiment-flavored subcommands; each one
/// maps onto the config key of the same name and wins over the file.
#[derive(Args, Default)]
struct FlagOverrides {
    /// Routing rule: mu | arrow | spectr
    #[arg(long)]
    router: Option<String>,
    /// Experts selected per token
    #[arg(long)]
    k: Option<usize>,
    /// Merge rule: two_step | fused
    #[arg(long)]
    merge: Option<String>,
    /// Expert weighting: uniform | softmax
    #[arg(long)]
    weighting: Option<String>,
    /// Softmax temperature (> 0)
    #[arg(long)]
    temperature: Option<f64>,
    /// Master seed for every random stream
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated rank list for the sweep
    #[arg(long)]
    ranks: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrally align a raw SALB bundle and write the aligned bundle
    Align {
        /// Raw-mode bundle to read
        input: PathBuf,
        /// Where the aligned bundle goes
        output: PathBuf,
    },
    /// Score CSV token vectors (one per line) against an aligned bundle
    Route {
        /// Aligned-mode bundle
        bundle: PathBuf,
        /// CSV file, one width-d_in token vector per line
        vectors: PathBuf,
        /// Optional key=value config file
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: FlagOverrides,
    },
    /// Forge the synthetic task family and write the experiment CSVs
    Simulate {
        /// Optional key=value config file
        config: Option<PathBuf>,
        /// Directory for the CSVs (created if missing)
        #[arg(long, value_name = "DIR", default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: FlagOverrides,
    },
    /// Simulate with the rank list front and center
    Sweep {
        /// Optional key=value config file
        config: Option<PathBuf>,
        /// Directory for the CSVs (created if missing)
        #[arg(long, value_name = "DIR", default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: FlagOverrides,
    },
    /// Print a bundle's JSON header without loading the payload
    Inspect {
        /// Any SALB bundle
        bundle: PathBuf,
    },
}

/// Builds the effective config: defaults, then the file, then the flags.
fn build_config(path: Option<&PathBuf>, flags: &FlagOverrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &flags.router {
        cfg.set("router", v)?;
    }
    if let Some(v) = flags.k {
        cfg.set("k", &v.to_string())?;
    }
    if let Some(v) = &flags.merge {
        cfg.set("merge", v)?;
    }
    if let Some(v) = &flags.weighting {
        cfg.set("weighting", v)?;
    }
    if let Some(v) = flags.temperature {
        cfg.set("temperature", &v.to_string())?;
    }
    if let Some(v) = flags.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(v) = &flags.ranks {
        cfg.set("ranks", v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Align { input, output } => {
            println!("{}", cmd_align(input, output)?);
        }
        Command::Route {
            bundle,
            vectors,
            config,
            flags,
        } => {
            let cfg = build_config(config.as_ref(), flags)?;
            print!("{}", cmd_route(bundle, vectors, &cfg)?);
        }
        Command::Simulate {
            config,
            out_dir,
            flags,
        }
        | Command::Sweep {
            config,
            out_dir,
            flags,
        } => {
            let cfg = build_config(config.as_ref(), flags)?;
            println!("{}", cmd_simulate(&cfg, out_dir)?);
        }
        Command::Inspect { bundle } => {
            println!("{}", cmd_inspect(bundle)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
