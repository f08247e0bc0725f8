//! `fkdmc`: runs one experiment per invocation from a TOML config and writes
//! CSV tables and JSON summaries named after the config hash.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fkdmc::exec::Backend;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::Output;

#[derive(Debug, Parser)]
#[command(name = "fkdmc", version, about = "Diffusion Monte Carlo experiments on linear-Gaussian Feynman-Kac models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the seed of the config (and therefore its hash).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Exact Gaussian flow and ground state.
    Exact,
    /// One walker run with energy estimate.
    Dmc,
    /// Error of the walker mean against the walker count.
    Sweep,
    /// Error growth of the walker mean for a one-dimensional model.
    Diverge,
    /// Walker-mean variance against the asymptotic variance.
    Variance,
    /// Stability certificate of the model.
    Stability,
    /// Smallest stable k-step model and replicated runs on it.
    Importance,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Dmc => "dmc",
            Command::Sweep => "sweep",
            Command::Diverge => "diverge",
            Command::Variance => "variance",
            Command::Stability => "stability",
            Command::Importance => "importance",
        }
    }
}

fn backend(threads: Option<usize>) -> CliResult<Backend> {
    #[cfg(feature = "parallel")]
    {
        if let Some(k) = threads {
            if k == 0 {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
        }
        Ok(Backend::Parallel)
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads.is_some_and(|k| k > 1) {
            eprintln!("warning: built without the `parallel` feature; --threads is ignored");
        }
        Ok(Backend::Sequential)
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut config = Config::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let backend = backend(cli.threads)?;
    let name = cli.command.name();
    let hash = config.hash();
    let mut out = Output::new(&cli.out, name, &hash, config.seed)?;
    let summary = match cli.command {
        Command::Exact => commands::exact(&config, &mut out),
        Command::Dmc => commands::dmc(&config, backend, &mut out),
        Command::Sweep => commands::sweep(&config, backend, &mut out),
        Command::Diverge => commands::diverge(&config, backend, &mut out),
        Command::Variance => commands::variance(&config, backend, &mut out),
        Command::Stability => commands::stability(&config, &mut out),
        Command::Importance => commands::importance(&config, backend, &mut out),
    }?;
    println!("{name} [{hash}]: {summary}");
    for file in out.written() {
        println!("  wrote {}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
