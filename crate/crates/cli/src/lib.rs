//! Command line driver: simulate, assemble, analyze and report, with every
//! run described by one JSON config and recorded in `manifest.json`.

pub mod config;
pub mod error;
pub mod manifest;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{parse_bin_spec, LoadedConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "koopvar", version, about = "Spectral analysis of stochastic Koopman operators from snapshot data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for assembly and grid evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Bin unbatched data into batches: `exact` or `grid=AxB`, optionally `:min=K`.
    #[arg(long, global = true)]
    pub bin: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate snapshot data (snapshots.csv).
    Simulate,
    /// Assemble G, A, L and H (matrices.bin, matrices.json).
    Matrices,
    /// Eigenpairs with residuals (eigs.csv).
    Eigs,
    /// Residual pseudospectrum; needs batched data (pseudospec.csv).
    Pseudospec,
    /// Variance-residual pseudospectrum (var_pseudospec.csv).
    VarPseudospec,
    /// Forecast norms and error bounds (forecast.csv).
    Forecast,
    /// Concentration bounds table (bounds.csv).
    Bounds,
    /// Everything above.
    All,
    /// Check manifest.json against the config and output files.
    Verify,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config_path = cli.config.ok_or_else(|| CliError::config("--config <path> is required"))?;
    let loaded = LoadedConfig::load(&config_path)?;
    let out = match (cli.out, &loaded.config.output) {
        (Some(o), _) => o,
        (None, Some(o)) => loaded.resolve(o),
        (None, None) => PathBuf::from("out"),
    };

    if cli.command == Command::Verify {
        let problems = manifest::verify(&out, &loaded.raw)?;
        if !problems.is_empty() {
            return Err(CliError::Tampered(problems));
        }
        println!("{}: manifest matches config and outputs", out.display());
        return Ok(());
    }

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot size thread pool: {e}")))?;
    }
    let bin = match cli.bin {
        Some(text) => Some((text.clone(), parse_bin_spec(&text)?)),
        None => None,
    };
    pipeline::Session::new(&loaded, bin, out)?.run(cli.command)
}
