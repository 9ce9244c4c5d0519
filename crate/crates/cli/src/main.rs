//! `parbench`: synthesize, split, train, recommend, evaluate and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use parbench::bimodal::Variant;
use parbench::eval::Scenario;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "parbench", version, about = "Frozen audio representations in hybrid music recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic listening log and embedding table.
    Synth,
    /// Temporal split into train, validation, hot test and cold test.
    Split,
    /// Train the selected models on the first seed and write checkpoints.
    Train,
    /// Write top-k recommendations from trained checkpoints.
    Recommend,
    /// Run the true and shuffled protocol and refresh the report.
    Evaluate,
    /// Aggregate every evaluation output into report.tsv and report.txt.
    Report,
}

/// Flags override values from the config file.
#[derive(Args)]
struct Flags {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated: knn, poprec, shallow, elsa, hybrid, bimodal.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Flags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model.names = config::parse_models(m)?;
        }
        if let Some(v) = self.variant {
            cfg.model.variant = Some(v);
        }
        if let Some(s) = self.scenario {
            cfg.eval.scenario = s;
        }
        if let Some(k) = self.k {
            cfg.eval.k = Some(k);
        }
        if let Some(seeds) = &self.seeds {
            cfg.eval.seeds = seeds.clone();
        }
        if let Some(e) = &self.embeddings {
            cfg.paths.embeddings = Some(e.clone());
        }
        if let Some(o) = &self.out {
            cfg.paths.out = o.clone();
        }
        Ok(cfg)
    }
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("PARBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .with_context(|| format!("PARBENCH_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = cli.flags.resolve()?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Split => commands::split(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Recommend => commands::recommend(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
