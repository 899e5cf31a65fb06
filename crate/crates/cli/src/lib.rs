//! Front end for the advmap pipeline: configuration, stage orchestration, and
//! the `advmap` command line.

pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;
pub use stages::{stage_hashes, Outcome, Runner, Stage};

#[derive(Debug, Parser)]
#[command(name = "advmap", version, about = "Adversarial examples through the layers of small image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply to absent keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override such as `train.epochs=5`; repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Global seed; every stage seed derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ADVMAP_JOBS", global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train the configured network and write `model.bin`.
    Train,
    /// Generate one corpus per configured attack.
    Attack,
    /// Write per-layer analysis series.
    Analyze,
    /// Write 2-D embeddings and scatter plots per layer.
    Embed,
    /// Write norm, confusion, and curve tables with plots.
    Report,
    /// Run every stage in order, skipping stages whose outputs are current.
    Pipeline,
}

impl Cli {
    /// The configuration after file, `--set`, `--seed`, and `--out`, in that order.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("out={}", toml::Value::String(out.display().to_string())));
        }
        config::load(self.config.as_deref(), &overrides)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let mut runner = Runner::new(cfg)?;
    let stage = match cli.command {
        Command::Train => Stage::Train,
        Command::Attack => Stage::Attack,
        Command::Analyze => Stage::Analyze,
        Command::Embed => Stage::Embed,
        Command::Report => Stage::Report,
        Command::Pipeline => {
            runner.pipeline()?;
            return Ok(());
        }
    };
    runner.run(stage, false).map(|_| ())
}
