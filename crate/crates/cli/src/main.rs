use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Shape- and scale-gated object detection.
#[derive(Parser, Debug)]
#[command(name = "shape-gate", version)]
struct Cli {
    /// Configuration file. Falls back to $SHAPE_GATE_CONFIG, then
    /// ./shape-gate.toml; built-in defaults apply when neither exists.
    #[arg(long, global = true, env = "SHAPE_GATE_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the database on labeled scenes.
    Train(TrainArgs),
    /// Detect the objects of a scene.
    Detect(DetectArgs),
    /// Time gated against exhaustive search.
    Bench(BenchArgs),
    /// Print the cluster table and check index consistency.
    DbStats(DbStatsArgs),
    /// Write a seeded synthetic shape corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    db: PathBuf,
    /// Manifest files: scene path on the first line, one label per blob after.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    db: PathBuf,
    image: PathBuf,
    /// Acceptance distance; defaults to the configured value.
    #[arg(long)]
    tau: Option<f64>,
    /// Neighbouring windows searched on each side; defaults to the configured value.
    #[arg(long)]
    slack: Option<u32>,
    /// Scan every cluster instead of the gated candidates.
    #[arg(long)]
    exhaustive: bool,
    /// Emit JSON lines.
    #[arg(long)]
    json: bool,
    /// Worker threads for per-blob processing.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Database to query; not needed with --synthetic.
    #[arg(long, required_unless_present = "synthetic")]
    db: Option<PathBuf>,
    /// Manifests whose scenes provide the queries.
    queries: Vec<PathBuf>,
    /// Use the generated 5-class x 20-member database and 100 queries.
    #[arg(long, conflicts_with_all = ["db", "queries"])]
    synthetic: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Resolutions per timed sample.
    #[arg(long, default_value_t = 20)]
    inner: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DbStatsArgs {
    #[arg(long)]
    db: PathBuf,
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Salt-and-pepper rate in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::load_config(cli.config.as_deref()).and_then(|config| match cli.command {
        Command::Train(a) => commands::train(config, &a.db, &a.manifests),
        Command::Detect(a) => commands::detect(
            config,
            &commands::DetectOptions {
                db: a.db,
                image: a.image,
                tau: a.tau,
                slack: a.slack,
                exhaustive: a.exhaustive,
                json: a.json,
                threads: a.threads,
            },
        ),
        Command::Bench(a) => commands::bench(
            config,
            &commands::BenchOptions {
                db: a.db,
                queries: a.queries,
                synthetic: a.synthetic,
                seed: a.seed,
                repeats: a.repeats,
                inner: a.inner,
                csv: a.csv,
            },
        ),
        Command::DbStats(a) => commands::db_stats(&a.db),
        Command::GenCorpus(a) => commands::gen_corpus(&a.out, a.seed, a.per_class, a.noise),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("shape-gate: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
