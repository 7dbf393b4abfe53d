mod cli;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ntt", version, about = "Navigation Turing Test laboratory")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to runs/<timestamp>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Symbolic,
    Hybrid,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write the configured map as text.
    GenMap,
    /// Train a navigation agent with PPO.
    TrainAgent {
        #[arg(long, value_enum)]
        kind: AgentKind,
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Record trajectories from a trained agent.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Generate scripted human trajectories.
    GenHuman {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Assemble a split corpus and materialize every encoding.
    Encode {
        /// Directories of trajectory files (repeatable).
        #[arg(long = "trajectories", required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Cross-validate and train classifiers on a corpus.
    TrainClassifier {
        #[arg(long)]
        corpus: PathBuf,
        /// Model kinds (repeatable); the configured list when omitted.
        #[arg(long = "kind")]
        kinds: Vec<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Score trained classifiers on the test split.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory of train-classifier.
        #[arg(long)]
        models: PathBuf,
        /// Study export (ground truth JSON) for the judgment-based columns.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Run the study service.
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for studies, sessions and judgments.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
    },
    /// Render a metrics file as a table.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenMap => "gen-map",
            Command::TrainAgent { .. } => "train-agent",
            Command::Rollout { .. } => "rollout",
            Command::GenHuman { .. } => "gen-human",
            Command::Encode { .. } => "encode",
            Command::TrainClassifier { .. } => "train-classifier",
            Command::Evaluate { .. } => "evaluate",
            Command::Serve { .. } => "serve",
            Command::Report { .. } => "report",
        }
    }
}

fn main() -> Result<()> {
    cli::run(Cli::parse())
}
