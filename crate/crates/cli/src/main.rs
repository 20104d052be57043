//! `eqlab`: command-line front end for equipotential-surface verification
//! runs. Loads a JSON run configuration, executes one subcommand, and emits
//! machine-readable JSON/CSV reports.

mod commands;
mod config;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::EXIT_CONFIG;
use crate::config::RunConfig;
use crate::logging::{log_debug, log_error};

#[derive(Parser, Debug)]
#[command(
    name = "eqlab",
    about = "equipotential-surface laboratory: identities, sweeps, asymptotics, \
             flow traces, boundary fits, and planar conservation checks",
    after_help = "Tolerance overrides: any --tol-KEY=VALUE flag (e.g. \
                  --tol-identity-a=1e-9, --tol-monotone-slack=1e-8) overrides the \
                  corresponding 'tolerances' entry of the config.\n\
                  EQLAB_LOG={error|info|debug} controls logging (default info)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for all randomness (check sets, random test points).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the grid's θ node count.
    #[arg(long = "n-theta", global = true)]
    n_theta: Option<usize>,

    /// Override the grid's φ node count.
    #[arg(long = "n-phi", global = true)]
    n_phi: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Pointwise identity suites on the configured field and levels.
    Identities,
    /// Level sweep with sign and monotonicity assertions.
    Sweep,
    /// Log-log decay slope of the W functional toward level zero.
    Asymptotics,
    /// Trace one point between levels along the field-line flow.
    Flow,
    /// Fit a boundary-value problem by the method of fundamental solutions.
    Mfs,
    /// Planar conservation and circle-rigidity checks.
    Planar,
}

fn main() -> ExitCode {
    // --tol-KEY=VALUE flags are collected before clap sees the arguments
    let mut tol_overrides: Vec<(String, f64)> = Vec::new();
    let mut args: Vec<String> = Vec::new();
    for arg in std::env::args() {
        if let Some(rest) = arg.strip_prefix("--tol-") {
            match rest.split_once('=') {
                Some((key, value)) => match value.parse::<f64>() {
                    Ok(v) => tol_overrides.push((key.replace('-', "_"), v)),
                    Err(_) => {
                        log_error!("invalid tolerance value in '{arg}'");
                        return ExitCode::from(EXIT_CONFIG as u8);
                    }
                },
                None => {
                    log_error!("tolerance flag '{arg}' must be --tol-KEY=VALUE");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            }
        } else {
            args.push(arg);
        }
    }

    let cli = Cli::parse_from(args);

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log_debug!("thread pool already initialized: {e}");
        }
    }

    let Some(config_path) = cli.config.as_ref() else {
        log_error!("--config PATH is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let mut config = match RunConfig::load(config_path) {
        Ok(config) => config,
        Err(message) => {
            log_error!("{message}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };

    // flag overrides win over the file
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(grid) = config.grid.as_mut() {
        if let Some(n) = cli.n_theta {
            grid.n_theta = n;
        }
        if let Some(n) = cli.n_phi {
            grid.n_phi = n;
        }
    }
    for (key, value) in &tol_overrides {
        if let Err(message) = config.tolerances.set(key, *value) {
            log_error!("{message}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }

    let code = match cli.command {
        Command::Identities => commands::cmd_identities(&config, &cli.out),
        Command::Sweep => commands::cmd_sweep(&config, &cli.out),
        Command::Asymptotics => commands::cmd_asymptotics(&config, &cli.out),
        Command::Flow => commands::cmd_flow(&config, &cli.out),
        Command::Mfs => commands::cmd_mfs(&config, &cli.out),
        Command::Planar => commands::cmd_planar(&config, &cli.out),
    };
    ExitCode::from(code as u8)
}
