//! Command-line orchestration: configuration, subcommands and exit codes.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{alignment_scores, load_embeddings, load_responses, load_results, subject_id, Ctx};
pub use config::Config;

use crate::error::{Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(
    name = "neuroalign",
    version,
    about = "Layer-wise LLM-to-brain encoding pipeline"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output root; relative paths in the config resolve against it.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Override a config key, e.g. `--set encode.k=10`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic fixture tree with planted layer and truth records.
    Simulate,
    /// Single-trial (LS-S) betas for every subject.
    Glm,
    /// Aggregate betas into one response vector per subject and ROI.
    ExtractRoi,
    /// Nested cross-validated ridge encoding for every model, subject, ROI and layer.
    Encode,
    /// Cross-lingual semantic alignment accuracy per model.
    Csaa,
    /// Best layers, asymmetry tests and instruct-vs-base comparisons.
    Stats,
    /// Layer curves, asymmetry and CSAA charts (SVG + TSV).
    Report,
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

/// Loads the config, applies overrides and flags, and returns the run context
/// with the worker count.
pub fn resolve(cli: &Cli) -> Result<(Ctx, usize)> {
    let mut cfg = Config::load(cli.config.as_deref(), &cli.set)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let threads = match (cli.threads, cfg.threads) {
        (Some(0), _) => return Err(Error::Config("--threads must be at least 1".into())),
        (Some(n), _) => n,
        (None, Some(cap)) => available.min(cap),
        (None, None) => available,
    };
    cfg.threads = Some(threads);
    cfg.validate()?;
    Ok((
        Ctx {
            cfg,
            out: cli.out.clone(),
        },
        threads,
    ))
}

pub fn run(cli: &Cli) -> Result<()> {
    let (ctx, threads) = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Glm => commands::cmd_glm(&ctx),
        Command::ExtractRoi => commands::cmd_extract_roi(&ctx),
        Command::Encode => commands::cmd_encode(&ctx),
        Command::Csaa => commands::cmd_csaa(&ctx),
        Command::Stats => commands::cmd_stats(&ctx),
        Command::Report => commands::cmd_report(&ctx),
    })
}
