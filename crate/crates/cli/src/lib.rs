//! `trajsynth` command line.
//!
//! Each subcommand has a `cmd_*` function taking its parsed arguments, so
//! the pipeline can be driven from tests without spawning processes.
//! Usage errors exit with 2, runtime failures with 1.

pub mod commands;
pub mod summary;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_dagger, cmd_demo_script, cmd_generate, cmd_score, cmd_serve, cmd_stats, cmd_train};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "trajsynth", version, about = "Synthetic trajectories from a few demonstrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the expert Q-network with demonstration-shaped rewards.
    Train(TrainArgs),
    /// Imitate an expert with dataset aggregation.
    Dagger(DaggerArgs),
    /// Roll out a policy file into a trajectory dataset.
    Generate(GenerateArgs),
    /// METEOR score matrix of generated trajectories against demonstrations.
    Score(ScoreArgs),
    /// ANOVA and above-average counts over three score matrices.
    Stats(StatsArgs),
    /// Shortest-path demonstrations with optional detours.
    DemoScript(DemoScriptArgs),
    /// Run the demonstration capture service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size settings.
    Full,
    /// Small maps on a laptop.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StoppingArg {
    SuccessWindow,
    Literal,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Map file, or the name of a bundled map.
    #[arg(long)]
    pub map: String,
    /// Demonstrations (JSON lines).
    #[arg(long)]
    pub demos: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    pub preset: Preset,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub n_thresh: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub learning_starts: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub stopping: Option<StoppingArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    WithDemos,
    ExpertSeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    GoalRate,
    MeanReturn,
}

#[derive(Debug, Clone, Args)]
pub struct DaggerArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Expert policy file written by `train`.
    #[arg(long)]
    pub expert: PathBuf,
    #[arg(long)]
    pub map: String,
    /// Demonstrations; required with `--mode with-demos`.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "goal-rate")]
    pub selection: SelectionArg,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub map: String,
    #[arg(short = 'n', long = "count", default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Sample classifier actions instead of taking the most likely one.
    #[arg(long)]
    pub sample: bool,
    /// Exploration rate for Q-network policies; defaults to the final
    /// training rate for the game.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output file (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub demos: PathBuf,
    /// Map file or bundled name; found from the demonstrations when omitted.
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub scores_dqn: PathBuf,
    #[arg(long)]
    pub scores_dagger_e: PathBuf,
    #[arg(long)]
    pub scores_dagger_plus_e: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DemoScriptArgs {
    #[arg(long)]
    pub map: String,
    #[arg(short = 'n', long = "count", default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    #[arg(long, default_value = "datasets")]
    pub datasets_dir: PathBuf,
    /// Built client to serve at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub ttl_minutes: u64,
    #[arg(long)]
    pub cors_origin: Option<String>,
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Train(a) => cmd_train(&a).map(drop),
        Command::Dagger(a) => cmd_dagger(&a).map(drop),
        Command::Generate(a) => cmd_generate(&a).map(drop),
        Command::Score(a) => cmd_score(&a).map(drop),
        Command::Stats(a) => cmd_stats(&a).map(|report| print!("{report}")),
        Command::DemoScript(a) => cmd_demo_script(&a).map(drop),
        Command::Serve(a) => cmd_serve(&a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
