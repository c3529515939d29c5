//! Command-line driver for the annotation, modeling, jury, and language
//! analysis pipeline. Every stage reads and writes files under one output
//! directory and leaves a manifest in `manifests/<stage>.json`.

pub mod config;
pub mod manifest;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Why a run stopped. Configuration problems exit with 2, everything about
/// the data itself with 1.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    pub fn data(msg: impl Into<String>) -> Self {
        Failure::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<stigma_core::Error> for Failure {
    fn from(e: stigma_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "stigma", version, about = "Stigma annotation and jury-learning pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = "STIGMA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Keyword-filter a raw comment stream and sample survivors.
    FilterCorpus,
    /// Per-keyword retention from a rated disambiguation sample.
    Disambiguate,
    /// Apply the quality-control funnel to workers and annotations.
    Clean,
    /// Comment-level train/test split.
    Split,
    /// Unigram and dictionary features for annotated and wild comments.
    Featurize,
    /// Train the network variants.
    Train,
    /// Held-out metrics for the networks and baselines.
    Eval,
    /// Sweep jury compositions over worker attributes.
    JurySweep,
    /// Label wild comments with single-stratum juries.
    WildLabel,
    /// Differential language analysis over jury labels.
    Dla,
    /// Inter-rater agreement and subgroup label-rate tests.
    Agreement,
    /// Generate a synthetic dataset and a config pointing at it.
    Synth,
    /// Summarize finished stages.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FilterCorpus => "filter-corpus",
            Command::Disambiguate => "disambiguate",
            Command::Clean => "clean",
            Command::Split => "split",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::JurySweep => "jury-sweep",
            Command::WildLabel => "wild-label",
            Command::Dla => "dla",
            Command::Agreement => "agreement",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let mut loaded = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        loaded.config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        // relative to the working directory, like any other flag
        loaded.config.paths.out = Some(std::path::absolute(out).map_err(|e| Failure::Config(e.to_string()))?);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Failure::Config(e.to_string()))?;
        return pool.install(|| stages::run(cli.command, &loaded));
    }
    stages::run(cli.command, &loaded)
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("stigma {}: {f}", cli.command.name());
            f.exit_code()
        }
    }
}
