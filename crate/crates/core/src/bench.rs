//! Gated versus exhaustive timing harness.
//!
//! Queries are fully described before timing starts, so the clock only sees
//! search resolution: candidate lookup, mean ranking and member scans for the
//! gated arm, a scan of every cluster for the exhaustive arm. Arms alternate
//! order from run to run and a warmup run is discarded.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::SearchMode;
use crate::corpus::generate_item;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, ShapeClass};
use crate::image::GrayImage;
use crate::index::{GlobalIndex, Member};
use crate::pipeline::{resolve_exhaustive, resolve_gated, Engine, Resolution};
use crate::scale::ScaleWindow;

/// A query reduced to what the search needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub shape: ShapeClass,
    pub window: ScaleWindow,
    pub features: FeatureVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Gated,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub mode: Arm,
    pub run: usize,
    pub query: usize,
    pub ns: u64,
    pub comparisons: u64,
    pub outcome: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmSummary {
    /// Sum over all measured runs.
    pub total_ns: u64,
    /// Member comparisons of one pass over the queries.
    pub total_comparisons: u64,
    /// Median over runs of the per-run total.
    pub median_run_ns: u64,
    pub per_query_median_ns: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub db_members: usize,
    pub query_count: usize,
    pub repeats: usize,
    pub gated: ArmSummary,
    pub exhaustive: ArmSummary,
    pub speedup_time: f64,
    pub speedup_comparisons: f64,
    #[serde(skip)]
    pub rows: Vec<BenchRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchParams {
    pub tau: f64,
    pub slack: u32,
    pub mode: SearchMode,
    pub repeats: usize,
    /// Resolutions per timed sample; the sample is the mean.
    pub inner: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            tau: 0.25,
            slack: 0,
            mode: SearchMode::FirstBelowTau,
            repeats: 5,
            inner: 20,
        }
    }
}

/// Describes every blob of `img` without consulting an index.
pub fn probes_for_scene(engine: &Engine, img: &GrayImage) -> Vec<Probe> {
    engine
        .blobs(img)
        .iter()
        .map(|b| {
            let k = engine.key(b, engine.config().scale.extensible);
            let d = engine.describe(b, &k.window);
            Probe {
                shape: k.shape,
                window: k.window,
                features: d.features,
            }
        })
        .collect()
}

fn resolve(arm: Arm, index: &GlobalIndex, p: &Probe, params: &BenchParams) -> Resolution {
    match arm {
        Arm::Gated => resolve_gated(index, p.shape, p.window, &p.features, params.tau, params.slack, params.mode),
        Arm::Exhaustive => resolve_exhaustive(index, &p.features, params.tau),
    }
}

fn median(values: &mut [u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2
    }
}

/// Runs `repeats` measured rounds (after one warmup) of both arms.
pub fn run_bench(index: &GlobalIndex, probes: &[Probe], params: &BenchParams) -> BenchResult {
    assert!(params.repeats >= 1 && params.inner >= 1);
    let mut rows = Vec::with_capacity(2 * params.repeats * probes.len());
    for run in 0..=params.repeats {
        let arms = if run % 2 == 0 {
            [Arm::Gated, Arm::Exhaustive]
        } else {
            [Arm::Exhaustive, Arm::Gated]
        };
        for arm in arms {
            for (q, probe) in probes.iter().enumerate() {
                let start = Instant::now();
                let mut res = resolve(arm, index, probe, params);
                for _ in 1..params.inner {
                    res = std::hint::black_box(resolve(arm, index, std::hint::black_box(probe), params));
                }
                let ns = start.elapsed().as_nanos() as u64 / params.inner as u64;
                if run > 0 {
                    rows.push(BenchRow {
                        mode: arm,
                        run,
                        query: q,
                        ns,
                        comparisons: res.members_compared,
                        outcome: res.outcome.tag(),
                    });
                }
            }
        }
    }
    // canonical order: arm, run, query
    rows.sort_by_key(|r| (r.mode == Arm::Exhaustive, r.run, r.query));

    let summarize = |arm: Arm| -> ArmSummary {
        let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.mode == arm).collect();
        let mut run_totals: Vec<u64> = (1..=params.repeats)
            .map(|run| mine.iter().filter(|r| r.run == run).map(|r| r.ns).sum())
            .collect();
        let per_query_median_ns = (0..probes.len())
            .map(|q| {
                let mut v: Vec<u64> = mine.iter().filter(|r| r.query == q).map(|r| r.ns).collect();
                median(&mut v)
            })
            .collect();
        ArmSummary {
            total_ns: run_totals.iter().sum(),
            total_comparisons: mine.iter().filter(|r| r.run == 1).map(|r| r.comparisons).sum(),
            median_run_ns: median(&mut run_totals),
            per_query_median_ns,
        }
    };
    let gated = summarize(Arm::Gated);
    let exhaustive = summarize(Arm::Exhaustive);
    let ratio = |num: u64, den: u64| if den == 0 { f64::INFINITY } else { num as f64 / den as f64 };
    BenchResult {
        db_members: index.member_count(),
        query_count: probes.len(),
        repeats: params.repeats,
        speedup_time: ratio(exhaustive.median_run_ns, gated.median_run_ns),
        speedup_comparisons: if exhaustive.total_comparisons == 0 && gated.total_comparisons == 0 {
            1.0
        } else {
            ratio(exhaustive.total_comparisons, gated.total_comparisons)
        },
        gated,
        exhaustive,
        rows,
    }
}

/// CSV with header `mode,run,query,ns,comparisons,outcome`.
pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let bytes = csv_bytes(rows);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn csv_bytes(rows: &[BenchRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    if rows.is_empty() {
        w.write_record(["mode", "run", "query", "ns", "comparisons", "outcome"])
            .expect("header writes");
    }
    w.into_inner().expect("in-memory writer")
}

/// Classes of the synthetic benchmark database.
pub const SYNTHETIC_CLASSES: [ShapeClass; 5] = [
    ShapeClass::Square,
    ShapeClass::Rectangle,
    ShapeClass::Circle,
    ShapeClass::Triangle,
    ShapeClass::Blob,
];

/// Window index every synthetic object lands in (side 64 by default).
pub const SYNTHETIC_WINDOW: u32 = 5;

/// Synthetic benchmark workload: `per_class` training objects of each of
/// [`SYNTHETIC_CLASSES`], all correctly classified and in window
/// [`SYNTHETIC_WINDOW`], plus `queries_per_class` fresh objects of each class
/// drawn the same way. Probes are interleaved across classes.
pub fn synthetic_workload(
    engine: &Engine,
    seed: u64,
    per_class: usize,
    queries_per_class: usize,
) -> Result<(GlobalIndex, Vec<Probe>)> {
    let mut index = GlobalIndex::new();
    let mut per_class_queries = Vec::new();
    for class in SYNTHETIC_CLASSES {
        let mut accepted = Vec::new();
        let mut ordinal = 0;
        while accepted.len() < per_class + queries_per_class {
            if ordinal > 200 * (per_class + queries_per_class) {
                return Err(Error::Config(format!("could not draw enough {class} objects in window {SYNTHETIC_WINDOW}")));
            }
            let item = generate_item(seed, class, ordinal, 0.0);
            ordinal += 1;
            let probes = probes_for_scene(engine, &item.image);
            if let [p] = probes.as_slice() {
                if p.shape == class && p.window.index == SYNTHETIC_WINDOW {
                    accepted.push((item.label, p.clone()));
                }
            }
        }
        let queries = accepted.split_off(per_class);
        for (label, p) in accepted {
            index.insert(
                p.shape,
                p.window,
                Member {
                    source: format!("synthetic:{label}"),
                    label,
                    features: p.features,
                },
            )?;
        }
        per_class_queries.push(queries.into_iter().map(|(_, p)| p).collect::<Vec<_>>());
    }
    let probes = (0..queries_per_class)
        .flat_map(|i| per_class_queries.iter().map(move |qs| qs[i].clone()))
        .collect();
    Ok((index, probes))
}
