//! Config-driven experiment runner: trains staged chains, scores them by
//! image completion, sweeps the gap-reduction identities and aggregates
//! results into plot-ready files. Every command records a manifest of what
//! it wrote.

pub mod common;
pub mod complete;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod theory;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "gogan",
    version,
    about = "Staged margin/ranking adversarial training experiments"
)]
pub struct Cli {
    /// Experiment config file; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[run] out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `[run] seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Completion worker threads (overrides `[run] workers`).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the chain and write checkpoints, gap traces and the ordering report.
    Train,
    /// Complete held-out images with every stage and tabulate PSNR/SSIM.
    Complete {
        /// Checkpoint directory (default: `<out>/checkpoints`).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Sweep random gap geometries and check the reduction identities.
    Theory {
        /// Trained chain to measure empirical residuals on.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Aggregate a finished run into curves and a summary.
    Report,
    /// Re-hash every file listed in the run's manifests.
    VerifyManifest,
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out.clone();
    match &cli.command {
        Command::Train => {
            let t = train::run_train(&cfg, &out)?;
            println!("trained {} stage(s); manifest {}", t.chain.len(), t.manifest.display());
            if let Some(rep) = &t.ordering {
                print!("{rep}");
            }
        }
        Command::Complete { checkpoints } => {
            let dir = checkpoints.clone().unwrap_or_else(|| out.join(train::CHECKPOINT_DIR));
            let c = complete::run_complete(&cfg, &dir, &out)?;
            print!("{}", c.summary.to_text());
        }
        Command::Theory { checkpoints } => {
            let t = theory::run_theory(&cfg, checkpoints.as_deref(), &out)?;
            print!("{}", theory::render_summary(&t.rows, &t.summary));
            if let Some(g) = &t.empirical {
                print!("{}", theory::render_empirical(g));
            }
        }
        Command::Report => {
            let r = report::run_report(&out)?;
            println!(
                "wrote {} report file(s) under {}",
                r.files.len(),
                out.join(report::REPORT_DIR).display()
            );
        }
        Command::VerifyManifest => {
            for (path, n) in manifest::verify_run_dir(&out)? {
                println!("{}: {n} file(s) verified", path.display());
            }
        }
    }
    Ok(())
}
