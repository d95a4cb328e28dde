//! `rtrec` command-line driver: wires run configs to the experiment
//! library and writes metrics artifacts (metrics.csv, summary.json,
//! counters.json) into the chosen output directory.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rtrec", version, about = "Collisionless-embedding online training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collisionless vs hashed-decomposition embedding A/B on rating data.
    CollisionExp(RunArgs),
    /// Simulated online training: batch phase, then per-shard sync,
    /// evaluate, train.
    OnlineExp(RunArgs),
    /// Packet-size arithmetic and a sync encode/apply micro-benchmark.
    SyncBench(SyncBenchArgs),
    /// Paired-seed runs with one injected shard failure and snapshot
    /// recovery.
    ReliabilityExp(RunArgs),
    /// Run the feature/action joiner over a record stream file.
    JoinerSim(RunArgs),
    /// Distinct-id statistics before/after a hashed reduction.
    CollisionStats(StatsArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Run configuration file (key=value sections).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; all artifacts land here.
    #[arg(long)]
    out: PathBuf,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the parameter-server shard count.
    #[arg(long)]
    shards: Option<u32>,

    /// Sparse sync interval in steps (0 disables step-level sync).
    #[arg(long)]
    sync_interval: Option<u64>,

    /// Dense sync interval in steps (multiple of the sparse interval).
    #[arg(long)]
    dense_interval: Option<u64>,

    /// Snapshot all training shards every N steps.
    #[arg(long)]
    snapshot_every: Option<u64>,

    /// Shard index for the injected failure.
    #[arg(long)]
    fail_shard: Option<u32>,

    /// Global step of the injected failure.
    #[arg(long)]
    fail_at: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct SyncBenchArgs {
    /// Output directory for summary.json.
    #[arg(long)]
    out: PathBuf,

    /// Touched-key count for the headline estimate.
    #[arg(long, default_value_t = 100_000)]
    keys: u64,

    /// Embedding width for the headline estimate.
    #[arg(long, default_value_t = 1_024)]
    dim: u64,
}

#[derive(Args, Debug, Clone)]
struct StatsArgs {
    /// File with one decimal 64-bit id per line.
    #[arg(long)]
    ids: PathBuf,

    /// Size of the reduced id space.
    #[arg(long)]
    space: u64,

    /// Optional directory for summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::CollisionExp(args) => commands::collision_exp(&args, verbose),
        Command::OnlineExp(args) => commands::online_exp(&args, verbose),
        Command::SyncBench(args) => commands::sync_bench(&args),
        Command::ReliabilityExp(args) => commands::reliability_exp(&args, verbose),
        Command::JoinerSim(args) => commands::joiner_sim(&args, verbose),
        Command::CollisionStats(args) => commands::collision_stats(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    use rtrec_core::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) | Some(Error::Parse { .. }) => ExitCode::from(2),
        Some(Error::MissingData(_)) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}
