//! `expertrec`: train an expert model, screen profiles, run recommendation
//! sessions, check operation counts and time the primitives.
//!
//! Exit codes: 0 ok, 1 protocol or run failure, 2 configuration or input error.

mod commands;
mod profile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use expertrec_core::harness::HarnessError;

#[derive(Parser)]
#[command(name = "expertrec", version, about = "Expert-based recommendation with private threshold-set output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Screen profiles and train an expert model on the accepted ones.
    Train(TrainArgs),
    /// Run one recommendation session for a user profile.
    Recommend(RecommendArgs),
    /// Print the detector verdict for every profile.
    Robdet(RobdetArgs),
    /// Time the eight primitives.
    Bench(BenchArgs),
    /// Bucket the model's predictions for every unrated pair of a dataset.
    Histogram(HistogramArgs),
    /// Run a synthetic session and compare operation counts with the formulas.
    VerifyCounters(VerifyArgs),
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// `deviation` or `accept-all`.
    #[arg(long, default_value = "deviation")]
    detector: String,
    #[arg(long, default_value_t = 1.5)]
    deviation_threshold: f64,
    #[arg(long, default_value_t = 3.0)]
    filler_z_threshold: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// MovieLens ratings (`u::i::r::ts` or tab separated).
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 5)]
    r_max: u8,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.02)]
    reg_user: f64,
    #[arg(long, default_value_t = 0.02)]
    reg_item: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model snapshot to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Noproxy,
    Proxy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Paper,
    Desk,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// Comma separated star values, e.g. `5.0,4.9`.
    #[arg(long)]
    thresholds: String,
    #[arg(long, default_value_t = 2048)]
    paillier_bits: u32,
    /// SWHE ring size: `desk` (n = 4096) or `paper` (n = 8192).
    #[arg(long, value_enum, default_value = "desk")]
    swhe: Profile,
    /// One SWHE ciphertext per item instead of slot packing.
    #[arg(long)]
    unbatched: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Model snapshot written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// The user's own ratings, one `item,rating` (or `::`/tab) per line.
    #[arg(long, conflicts_with_all = ["ratings", "user"])]
    profile: Option<PathBuf>,
    /// Take the profile of `--user` from this MovieLens file instead.
    #[arg(long, requires = "user")]
    ratings: Option<PathBuf>,
    #[arg(long, requires = "ratings")]
    user: Option<u32>,
    /// Write the framed transcript here.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Print per-party operation counts to stderr.
    #[arg(long)]
    counters: bool,
}

#[derive(Args)]
struct RobdetArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 5)]
    r_max: u8,
    #[command(flatten)]
    detector: DetectorArgs,
    /// CSV `user,accepted,deviation,filler_z`; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    #[arg(long, default_value_t = 30)]
    samples: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    model: PathBuf,
    /// MovieLens file whose users are evaluated; items the model does not
    /// know are skipped.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 5)]
    r_max: u8,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Number of items M.
    #[arg(long)]
    items: usize,
}

pub enum CliError {
    Config(String),
    Run(String),
    Harness(HarnessError),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
            CliError::Harness(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Run(m) => f.write_str(m),
            CliError::Harness(e) => write!(f, "{e}"),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Recommend(a) => commands::recommend(a),
        Command::Robdet(a) => commands::robdet(a),
        Command::Bench(a) => commands::bench(a),
        Command::Histogram(a) => commands::histogram(a),
        Command::VerifyCounters(a) => commands::verify_counters(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
