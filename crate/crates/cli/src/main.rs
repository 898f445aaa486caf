//! `fakewake`: generate, explain and mitigate fuzzy wake-up words.
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 configuration error,
//! 3 oracle failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fakewake::oracle::OracleSpec;
use fakewake::Language;
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "fakewake", version, about = "Fuzzy wake-up word generation, explanation and mitigation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct Common {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set evolve.generations=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    language: Option<Language>,
    #[arg(long, global = true)]
    wake_word: Option<String>,
    /// `sim` or `exec:<command>`.
    #[arg(long, global = true)]
    oracle: Option<OracleSpec>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 disables parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for fuzzy words against the oracle.
    Generate,
    /// Train the proxy classifier on an archive and report decisive factors.
    Explain {
        #[arg(long)]
        archive: PathBuf,
    },
    /// Compare the original and strengthened reference detectors.
    Mitigate {
        #[arg(long)]
        archive: PathBuf,
    },
    /// Phonetic distance between two words.
    Dist { a: String, b: String },
    /// Check words against the pinyin inventory or the English alphabet.
    Validate {
        #[arg(required = true)]
        words: Vec<String>,
    },
    /// Print the default configuration.
    Defaults {
        /// Markdown reference table instead of JSON.
        #[arg(long)]
        markdown: bool,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::load(self.config.as_deref(), &self.set)?;
        if let Some(l) = self.language {
            c.language = l;
        }
        if let Some(w) = &self.wake_word {
            c.wake_word = w.clone();
        }
        if let Some(o) = &self.oracle {
            c.oracle = o.clone();
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.common.resolve().and_then(|cfg| match cli.cmd {
        Cmd::Generate => commands::generate(&cfg),
        Cmd::Explain { archive } => commands::explain(&cfg, &archive),
        Cmd::Mitigate { archive } => commands::mitigate(&cfg, &archive),
        Cmd::Dist { a, b } => commands::dist(&cfg, &a, &b),
        Cmd::Validate { words } => commands::validate(&cfg, &words),
        Cmd::Defaults { markdown } => {
            if markdown {
                print!("{}", config::reference_markdown());
            } else {
                println!("{}", RunConfig::default().to_json());
            }
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fakewake: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
