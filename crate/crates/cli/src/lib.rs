//! Command-line pipeline for cohesive-convergence experiments.
//!
//! `prepare` loads or generates the data and fixes the split, `train` fits
//! the model, `cohesion` samples the cohesion matrices, and `report`
//! classifies and extracts groups. `run` performs all four in order.

pub mod config;
mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use pipeline::Experiment;

#[derive(Debug, Clone, Parser)]
#[command(name = "cohesive", version, about = "Cohesive-convergence experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (TOML). Defaults to `config.toml` in the output
    /// directory for every stage after prepare.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for evaluation kernels (default: all cores). Results
    /// do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Replaces the master seed of the config.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,

    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load or generate data and write the split manifest.
    Prepare,
    /// Train the model (resumes from an existing checkpoint).
    Train,
    /// Sample the cohesion matrices.
    Cohesion,
    /// Classify, evaluate the argmax baseline, and extract groups.
    Report,
    /// All four stages in order.
    Run,
}

/// Resolves the config and output directory for `cli`.
pub fn experiment(cli: &Cli) -> Result<Experiment> {
    let from_file = match &cli.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = cli.seed_override {
                cfg.seed = seed;
            }
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            Some((pipeline::normalized_config(&cfg, &base)?, cfg.out_dir.clone()))
        }
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| from_file.as_ref().and_then(|(_, o)| o.clone()))
        .ok_or_else(|| CliError::config("no output directory: pass --out or set out_dir in the config"))?;
    let saved_path = out.join(pipeline::CONFIG_FILE);
    let saved = if saved_path.exists() {
        Some(ExperimentConfig::load(&saved_path)?)
    } else {
        None
    };

    let config = match (from_file, saved) {
        (Some((cfg, _)), None) => cfg,
        (Some((cfg, _)), Some(saved)) => {
            if cfg != saved {
                let restarting = matches!(cli.command, Command::Prepare | Command::Run);
                if !restarting {
                    return Err(CliError::config(format!(
                        "config differs from the one prepared in {}; rerun prepare",
                        out.display()
                    )));
                }
                if out.join(pipeline::CHECKPOINT_FILE).exists() {
                    return Err(CliError::config(format!(
                        "{} holds results of a different config; use a fresh output directory",
                        out.display()
                    )));
                }
            }
            cfg
        }
        (None, Some(mut saved)) => {
            if let Some(seed) = cli.seed_override {
                if seed != saved.seed && cli.command != Command::Prepare {
                    return Err(CliError::config(
                        "--seed-override differs from the prepared seed; rerun prepare",
                    ));
                }
                saved.seed = seed;
            }
            saved
        }
        (None, None) => {
            return Err(CliError::config(format!(
                "no --config given and {} does not exist",
                saved_path.display()
            )))
        }
    };
    Ok(Experiment {
        config,
        out,
        quiet: cli.quiet,
    })
}

/// Runs one command inside a dedicated worker pool.
pub fn run(cli: &Cli) -> Result<()> {
    let exp = experiment(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Prepare => pipeline::cmd_prepare(&exp).map(drop),
        Command::Train => pipeline::cmd_train(&exp).map(drop),
        Command::Cohesion => pipeline::cmd_cohesion(&exp),
        Command::Report => pipeline::cmd_report(&exp).map(drop),
        Command::Run => {
            pipeline::cmd_prepare(&exp)?;
            pipeline::cmd_train(&exp)?;
            pipeline::cmd_cohesion(&exp)?;
            pipeline::cmd_report(&exp).map(drop)
        }
    })
}
