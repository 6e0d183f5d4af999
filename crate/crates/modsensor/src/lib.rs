//! `modsensor`: command-line pipelines over [`modsensor_core`].
//!
//! Every subcommand resolves its parameters from defaults, an optional
//! `--config` JSON file and explicit flags, in that order. The resolved
//! record is echoed in the JSON output as `config_echo`, and `replay` reruns
//! it. Random streams are keyed by (seed, trial, round) through
//! [`modsensor_core::rng`], so results do not depend on the worker count
//! (capped by `MODSENSOR_THREADS`).
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod values;

use commands::{fisher, force, magnus, probgrid, qpe, replay, state};
use config::{resolve, CommandName, Global, RunConfig};
pub use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "modsensor",
    version,
    about = "Grid and number-phase state sensing simulations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a sensing state and report its metrics.
    State(state::StateArgs),
    /// Outcome probabilities over an (ε_a, ε_b) lattice, as CSV.
    Probgrid(probgrid::ProbgridArgs),
    /// Fisher-information report from a probgrid CSV.
    Fisher(fisher::FisherArgs),
    /// Bayesian phase estimation trials.
    Qpe(qpe::QpeArgs),
    /// Check the sideband conditional-number pulse against its Magnus form.
    Magnus(magnus::MagnusArgs),
    /// Force and field sensitivities from a displacement uncertainty.
    Force(force::ForceArgs),
    /// Rerun a recorded configuration.
    Replay(replay::ReplayArgs),
}

/// Where a run writes its data and its JSON record.
#[derive(Debug, Clone, Default)]
pub struct Io {
    pub output: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first} (see --help)");
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let io = Io {
        output: g.output.clone(),
        summary: g.summary.clone(),
    };
    let cfg = match &cli.command {
        Command::State(a) => resolve::<state::StateParams>(CommandName::State, a, g)?,
        Command::Probgrid(a) => resolve::<probgrid::ProbgridParams>(CommandName::Probgrid, a, g)?,
        Command::Fisher(a) => resolve::<fisher::FisherParams>(CommandName::Fisher, a, g)?,
        Command::Qpe(a) => resolve::<qpe::QpeParams>(CommandName::Qpe, a, g)?,
        Command::Magnus(a) => resolve::<magnus::MagnusParams>(CommandName::Magnus, a, g)?,
        Command::Force(a) => resolve::<force::ForceParams>(CommandName::Force, a, g)?,
        Command::Replay(a) => replay::load(a, g)?,
    };
    execute(&cfg, &io)
}

/// Run a resolved configuration.
pub fn execute(cfg: &RunConfig, io: &Io) -> Result<()> {
    match cfg.command {
        CommandName::State => state::run(cfg, &cfg.params()?, io),
        CommandName::Probgrid => probgrid::run(cfg, &cfg.params()?, io),
        CommandName::Fisher => fisher::run(cfg, &cfg.params()?, io),
        CommandName::Qpe => qpe::run(cfg, &cfg.params()?, io),
        CommandName::Magnus => magnus::run(cfg, &cfg.params()?, io),
        CommandName::Force => force::run(cfg, &cfg.params()?, io),
    }
}

/// Worker pool capped by `MODSENSOR_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = match std::env::var("MODSENSOR_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::input(format!("MODSENSOR_THREADS must be a positive integer, got `{v}`")))?
            .min(available),
        Err(_) => available,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::input(format!("cannot start {threads} workers: {e}")))
}
