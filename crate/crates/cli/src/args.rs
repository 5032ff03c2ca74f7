use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mudqn", version, about = "Train, evaluate and inspect agents that play text games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the train/eval protocol and write metrics, checkpoints and a run manifest.
    Train(TrainArgs),
    /// Evaluate a saved agent without updating it.
    Eval(EvalArgs),
    /// Play a world by hand on standard input.
    Play(PlayArgs),
    /// Nearest-neighbour report over room descriptions and an embedding export.
    Analyze(AnalyzeArgs),
    /// Start an LSTM-DQN agent from another run's representation and train it.
    Transfer(TransferArgs),
}

/// Settings shared by every command that trains. Anything left unset falls
/// back to the config file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// home, home-variant, bridge, or a world-definition file.
    #[arg(long)]
    pub world: Option<String>,
    /// lstm-dqn, bow-dqn, bi-dqn, bow-lin, bi-lin or random.
    #[arg(long)]
    pub agent: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Episodes per phase.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Step limit per episode.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// prioritized or uniform.
    #[arg(long)]
    pub sampling: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint every N epochs as well as after the last one.
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,
    /// Stop once evaluation completion has held the threshold.
    #[arg(long)]
    pub until_converged: bool,
    /// Record evaluation episodes to `<run-id>.transcript`.
    #[arg(long)]
    pub transcript: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the world the checkpoint was trained on.
    #[arg(long)]
    pub world: Option<String>,
    /// Evaluation phases to run.
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long, default_value = "home")]
    pub world: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ends an episode after this many commands.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write every step in the transcript format.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the world the checkpoint was trained on.
    #[arg(long)]
    pub world: Option<String>,
    /// Neighbours listed per description.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Write the neighbour report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the word embeddings as TSV.
    #[arg(long, value_name = "PATH")]
    pub export_embeddings: Option<PathBuf>,
    /// Include function words in the export.
    #[arg(long)]
    pub keep_stopwords: bool,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Source checkpoint (an lstm-dqn run).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// What to carry over; only `representation` is allowed.
    #[arg(long, default_value = "representation")]
    pub carry: String,
    /// Also train a from-scratch agent with the same seeds.
    #[arg(long)]
    pub baseline_fresh: bool,
    #[command(flatten)]
    pub run: RunArgs,
}
