//! Subcommand bodies. Each returns the process exit code on success.

use std::path::{Path, PathBuf};

use shape_gate::bench::{probes_for_scene, run_bench, synthetic_workload, write_csv, BenchParams};
use shape_gate::corpus::{generate, write_corpus};
use shape_gate::pipeline::{to_json_lines, Manifest, TrainReport};
use shape_gate::{Config, Engine, Error, GlobalIndex, GrayImage, Outcome, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_LABELS: u8 = 2;
pub const EXIT_NEW_OBJECT: u8 = 3;
pub const EXIT_FINGERPRINT: u8 = 4;
pub const EXIT_CORRUPT: u8 = 5;

const DEFAULT_CONFIG: &str = "shape-gate.toml";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::LabelMismatch { .. } | Error::Manifest { .. } => EXIT_LABELS,
        Error::FingerprintMismatch { .. } => EXIT_FINGERPRINT,
        Error::Corrupt(_) | Error::SchemaVersion(_) => EXIT_CORRUPT,
        _ => EXIT_FAILURE,
    }
}

/// An explicit path must exist; the default file is optional.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None if Path::new(DEFAULT_CONFIG).exists() => Config::load(DEFAULT_CONFIG),
        None => Ok(Config::default()),
    }
}

fn load_checked(db: &Path, config: &Config) -> Result<GlobalIndex> {
    let loaded = GlobalIndex::load(db)?;
    let expected = config.fingerprint();
    if loaded.fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            expected,
            found: loaded.fingerprint,
        });
    }
    Ok(loaded.index)
}

pub fn train(config: Config, db: &Path, manifests: &[PathBuf]) -> Result<u8> {
    let engine = Engine::new(config)?;
    let mut index = if db.exists() {
        load_checked(db, engine.config())?
    } else {
        GlobalIndex::new()
    };
    // the file is only replaced once every scene has trained
    let mut reports: Vec<TrainReport> = Vec::new();
    for path in manifests {
        let m = Manifest::load(path)?;
        let img = GrayImage::read_pgm(&m.scene)?;
        let scene = m.scene.display().to_string();
        let report = engine
            .train_scene(&img, &m.labels, &scene, &mut index)
            .inspect_err(|_| eprintln!("shape-gate: while training {}", path.display()))?;
        reports.push(report);
    }
    index.save(db, &engine.fingerprint())?;

    for r in &reports {
        println!("{}: {} blobs", r.scene, r.blobs_found);
        for row in &r.rows {
            println!(
                "  {:<16} {:<9} window {} (side {}) -> cluster {}{}",
                row.label,
                row.shape.name(),
                row.window.index,
                row.window.side,
                row.cluster_id,
                if row.created_new_cluster { " (new)" } else { "" }
            );
        }
    }
    println!(
        "database: {} clusters, {} members",
        index.clusters().len(),
        index.member_count()
    );
    Ok(EXIT_OK)
}

pub struct DetectOptions {
    pub db: PathBuf,
    pub image: PathBuf,
    pub tau: Option<f64>,
    pub slack: Option<u32>,
    pub exhaustive: bool,
    pub json: bool,
    pub threads: usize,
}

pub fn detect(config: Config, o: &DetectOptions) -> Result<u8> {
    let index = load_checked(&o.db, &config)?;
    let tau = o.tau.unwrap_or(config.pipeline.tau);
    let slack = o.slack.unwrap_or(config.pipeline.slack);
    if !(tau > 0.0) {
        return Err(Error::Config("--tau must be positive".into()));
    }
    let engine = Engine::new(config)?.with_threads(o.threads);
    let img = GrayImage::read_pgm(&o.image)?;
    let results = if o.exhaustive {
        engine.detect_exhaustive(&img, &index, tau)?
    } else {
        engine.detect_scene(&img, &index, tau, slack)?
    };

    if o.json {
        print!("{}", to_json_lines(&results));
    } else {
        for r in &results {
            let what = match &r.outcome {
                Outcome::Detected { label, distance } => format!("detected {label} (distance {distance:.4})"),
                other => format!("new object ({})", other.tag()),
            };
            println!(
                "blob {}: {what}; {} window {} (side {}); {} clusters, {} members compared",
                r.blob,
                r.shape.name(),
                r.window.index,
                r.window.side,
                r.clusters_visited,
                r.members_compared
            );
        }
    }
    Ok(if results.iter().all(|r| r.outcome.is_detected()) {
        EXIT_OK
    } else {
        EXIT_NEW_OBJECT
    })
}

pub struct BenchOptions {
    pub db: Option<PathBuf>,
    pub queries: Vec<PathBuf>,
    pub synthetic: bool,
    pub seed: u64,
    pub repeats: usize,
    pub inner: usize,
    pub csv: Option<PathBuf>,
}

pub fn bench(config: Config, o: &BenchOptions) -> Result<u8> {
    if o.repeats == 0 || o.inner == 0 {
        return Err(Error::Config("--repeats and --inner must be >= 1".into()));
    }
    let params = BenchParams {
        tau: config.pipeline.tau,
        slack: config.pipeline.slack,
        mode: config.pipeline.mode,
        repeats: o.repeats,
        inner: o.inner,
    };
    let engine = Engine::new(config)?;
    let (index, probes) = if o.synthetic {
        println!("workload: synthetic, 5 shape classes x 20 members in one window, 100 queries (seed {})", o.seed);
        synthetic_workload(&engine, o.seed, 20, 20)?
    } else {
        let db = o.db.as_deref().expect("clap requires --db without --synthetic");
        let index = load_checked(db, engine.config())?;
        let mut probes = Vec::new();
        for path in &o.queries {
            let m = Manifest::load(path)?;
            probes.extend(probes_for_scene(&engine, &GrayImage::read_pgm(&m.scene)?));
        }
        (index, probes)
    };

    let r = run_bench(&index, &probes, &params);
    if let Some(path) = &o.csv {
        write_csv(path, &r.rows)?;
    }
    println!("database members: {}, queries: {}, repeats: {}", r.db_members, r.query_count, r.repeats);
    for (name, s) in [("gated", &r.gated), ("exhaustive", &r.exhaustive)] {
        println!(
            "{name:<10} median run {:>10} ns, comparisons per pass {:>8}",
            s.median_run_ns, s.total_comparisons
        );
    }
    println!("speedup (time): {:.2}x", r.speedup_time);
    println!("speedup (comparisons): {:.2}x", r.speedup_comparisons);
    Ok(EXIT_OK)
}

pub fn db_stats(db: &Path) -> Result<u8> {
    let loaded = GlobalIndex::load(db)?;
    let index = &loaded.index;
    println!("{} clusters, {} members (fingerprint {})", index.clusters().len(), index.member_count(), loaded.fingerprint);
    if !index.is_empty() {
        println!("{:>4}  {:<9} {:>6} {:>5} {:>6}  {:>9}", "id", "shape", "window", "side", "count", "mean-norm");
    }
    for c in index.clusters() {
        let norm = c.mean().as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "{:>4}  {:<9} {:>6} {:>5} {:>6}  {:>9.4}",
            c.id(),
            c.key().shape.name(),
            c.key().window,
            c.window_side(),
            c.count(),
            norm
        );
    }
    match index.check_consistency() {
        Ok(()) => {
            println!("consistency: OK");
            Ok(EXIT_OK)
        }
        Err(reason) => {
            println!("consistency: FAILED ({reason})");
            Ok(EXIT_CORRUPT)
        }
    }
}

pub fn gen_corpus(out: &Path, seed: u64, per_class: usize, noise: f64) -> Result<u8> {
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::Config("--noise must be in [0, 1)".into()));
    }
    let items = generate(seed, per_class, noise);
    write_corpus(out, &items)?;
    println!("wrote {} scenes and manifests to {}", items.len(), out.display());
    Ok(EXIT_OK)
}
