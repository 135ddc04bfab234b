use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod manifest;

/// Role discovery on location check-ins: features, k-means++ roles and
/// silhouette-rewarded role stabilization.
#[derive(Debug, Parser)]
#[command(name = "rolestab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a raw check-in TSV into a cleaned TSV, canonical NDJSON and stats.
    Ingest(IngestArgs),
    /// Build per-user time-by-root and distance-by-root feature tables.
    Featurize(FeaturizeArgs),
    /// RMSE elbow curve over a range of k.
    Elbow(ElbowArgs),
    /// One seeded k-means++ clustering with per-user silhouettes.
    Cluster(ClusterArgs),
    /// Stabilize a clustering into roles.
    Stabilize(StabilizeCmdArgs),
    /// Cluster N times, stabilize each run and compare before and after.
    Report(ReportArgs),
    /// Synthetic inputs.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Schema {
    Auto,
    WithOffset,
    WithoutOffset,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Normalize {
    None,
    L1,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Order {
    Sorted,
    Shuffle,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Reference {
    Snapshot,
    Incremental,
}

#[derive(Debug, Args, Serialize)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Fail on the first malformed row.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "auto")]
    schema: Schema,
}

#[derive(Debug, Args, Serialize)]
struct FeaturizeArgs {
    /// Check-in TSV, raw or as written by `ingest`.
    #[arg(long)]
    input: PathBuf,
    /// JSON object mapping category ids or names to root labels.
    #[arg(long)]
    root_map: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "l1")]
    normalize: Normalize,
    /// Fail on check-ins whose category has no root.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 20)]
    night_start: u8,
    #[arg(long, default_value_t = 8)]
    night_end: u8,
}

#[derive(Debug, Args, Serialize)]
struct ElbowArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 15)]
    k_max: usize,
    /// k-means++ runs per k; the lowest RMSE is kept.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ClusterArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct StabilizeArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.7)]
    gamma: f64,
    /// Randomness threshold as a fraction of the user count.
    #[arg(long, default_value_t = 0.05)]
    delta_frac: f64,
    #[arg(long, default_value_t = 500)]
    max_rounds: usize,
    #[arg(long, value_enum, default_value = "sorted")]
    order: Order,
    #[arg(long, value_enum, default_value = "snapshot")]
    reference: Reference,
}

#[derive(Debug, Args, Serialize)]
struct StabilizeCmdArgs {
    #[arg(long)]
    features: PathBuf,
    /// model.json written by `cluster`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    params: StabilizeArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    params: StabilizeArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Gaussian blobs written as a feature table plus true labels.
    Blobs(BlobArgs),
    /// Check-ins from a few behaviour archetypes plus a matching root map.
    Checkins(CheckinArgs),
}

#[derive(Debug, Args, Serialize)]
struct BlobArgs {
    #[arg(long)]
    k_true: usize,
    #[arg(long, default_value_t = 50)]
    per_cluster: usize,
    #[arg(long, default_value_t = 216)]
    dims: usize,
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Clamp coordinates at zero.
    #[arg(long)]
    clip: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CheckinArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[arg(long, default_value_t = 5)]
    archetypes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    /// Bad flags or a missing input file.
    Usage(String),
    /// Inputs that could not be processed.
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<rolestab_core::Error>() {
            Some(rolestab_core::Error::InvalidConfig(msg)) => Failure::Usage(msg.clone()),
            _ => Failure::Data(e),
        }
    }
}

impl From<rolestab_core::Error> for Failure {
    fn from(e: rolestab_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Featurize(a) => commands::featurize(&a),
        Command::Elbow(a) => commands::elbow(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Stabilize(a) => commands::stabilize(&a),
        Command::Report(a) => commands::report(&a),
        Command::Synth(SynthCommand::Blobs(a)) => commands::synth_blobs(&a),
        Command::Synth(SynthCommand::Checkins(a)) => commands::synth_checkins(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
