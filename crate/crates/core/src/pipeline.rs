//! Training and detection.
//!
//! Training: threshold, denoise and segment the scene once, then for every
//! blob classify its shape, map its bounding box to a scale window, normalize
//! it into that window, describe it and insert it under `(shape, window)`.
//!
//! Detection mirrors this, but consults the index before doing any per-blob
//! work beyond classification: a blob whose shape or window has no cluster is
//! declared a new object without normalization, keypoint detection or a
//! single member comparison.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, SearchMode};
use crate::dog::{detect_keypoints, keypoint_stats, FloatImage, KeypointStats};
use crate::error::{Error, Result};
use crate::features::{classify_shape, extract_features, features_of_mask, FeatureVector, ShapeClass};
use crate::image::GrayImage;
use crate::index::{ClusterId, GlobalIndex, Member};
use crate::preprocess::{binarize, denoise_median, normalize, segment, ObjectBlob};
use crate::scale::{map_to_window, ScaleWindow, WindowFamily};

/// A training scene and the labels of its blobs in segmentation order
/// (top-to-bottom by bounding box, then left-to-right).
///
/// On disk: the first non-empty line is the scene path, relative to the
/// manifest's directory unless absolute; every further non-empty line is one
/// label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub scene: PathBuf,
    pub labels: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> std::result::Result<Self, String> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let scene = lines.next().ok_or("empty manifest")?;
        let scene = Path::new(scene);
        Ok(Self {
            scene: if scene.is_absolute() {
                scene.to_path_buf()
            } else {
                base_dir.join(scene)
            },
            labels: lines.map(String::from).collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, dir).map_err(|reason| Error::Manifest {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Manifest text with the scene path written as given.
    pub fn render(scene: &str, labels: &[String]) -> String {
        let mut out = format!("{scene}\n");
        for l in labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRow {
    pub label: String,
    pub shape: ShapeClass,
    pub window: ScaleWindow,
    pub cluster_id: ClusterId,
    pub created_new_cluster: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainReport {
    pub scene: String,
    pub blobs_found: usize,
    pub rows: Vec<TrainRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoShapeCluster,
    NoScaleCluster,
    DistanceExceedsTau,
}

impl RejectReason {
    /// True for the rejections decided by the index alone.
    pub fn is_early(self) -> bool {
        matches!(self, RejectReason::NoShapeCluster | RejectReason::NoScaleCluster)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Detected { label: String, distance: f64 },
    NewObject { reason: RejectReason },
}

impl Outcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            Outcome::Detected { label, .. } => Some(label),
            Outcome::NewObject { .. } => None,
        }
    }

    pub fn is_detected(&self) -> bool {
        matches!(self, Outcome::Detected { .. })
    }

    /// Short form used in CSV output.
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Detected { .. } => "detected",
            Outcome::NewObject { reason: RejectReason::NoShapeCluster } => "no_shape_cluster",
            Outcome::NewObject { reason: RejectReason::NoScaleCluster } => "no_scale_cluster",
            Outcome::NewObject { reason: RejectReason::DistanceExceedsTau } => "distance_exceeds_tau",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub blob: usize,
    pub outcome: Outcome,
    pub shape: ShapeClass,
    pub window: ScaleWindow,
    pub clusters_visited: usize,
    pub members_compared: u64,
    pub elapsed_ns: u64,
    /// Absent when the blob was rejected before keypoint detection.
    pub keypoints: Option<KeypointStats>,
}

impl DetectionResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }

    /// Copy with the timing field zeroed, for determinism comparisons.
    pub fn untimed(&self) -> Self {
        Self {
            elapsed_ns: 0,
            ..self.clone()
        }
    }
}

/// Outcome of resolving one described query against the index.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolution {
    pub outcome: Outcome,
    pub clusters_visited: usize,
    pub members_compared: u64,
}

impl Resolution {
    fn rejected(reason: RejectReason) -> Self {
        Self {
            outcome: Outcome::NewObject { reason },
            clusters_visited: 0,
            members_compared: 0,
        }
    }
}

/// How many times each per-blob stage has run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub feature: u64,
    pub normalize: u64,
    pub keypoint: u64,
}

#[derive(Debug, Default)]
struct StageCounters {
    feature: AtomicU64,
    normalize: AtomicU64,
    keypoint: AtomicU64,
}

/// Per-blob description used for matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Description {
    pub features: FeatureVector,
    pub keypoints: KeypointStats,
}

/// A blob after the cheap, index-independent stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyed {
    pub shape: ShapeClass,
    pub window: ScaleWindow,
}

pub struct Engine {
    config: Config,
    family: WindowFamily,
    threads: usize,
    counters: StageCounters,
}

impl Engine {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            family: config.scale.family(),
            config,
            threads: 1,
            counters: StageCounters::default(),
        })
    }

    /// Number of worker threads for per-blob detection; 1 is sequential.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn family(&self) -> &WindowFamily {
        &self.family
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    pub fn stage_counts(&self) -> StageCounts {
        StageCounts {
            feature: self.counters.feature.load(Ordering::Relaxed),
            normalize: self.counters.normalize.load(Ordering::Relaxed),
            keypoint: self.counters.keypoint.load(Ordering::Relaxed),
        }
    }

    pub fn reset_stage_counts(&self) {
        self.counters.feature.store(0, Ordering::Relaxed);
        self.counters.normalize.store(0, Ordering::Relaxed);
        self.counters.keypoint.store(0, Ordering::Relaxed);
    }

    /// Threshold, optional denoise, segment.
    pub fn blobs(&self, img: &GrayImage) -> Vec<ObjectBlob> {
        let p = &self.config.preprocess;
        let mut bin = binarize(img, p.threshold);
        if p.denoise {
            bin = denoise_median(&bin, p.denoise_radius);
        }
        segment(&bin, p.connectivity, p.min_area)
    }

    /// Shape class and scale window of a blob.
    pub fn key(&self, blob: &ObjectBlob, extensible: bool) -> Keyed {
        self.counters.feature.fetch_add(1, Ordering::Relaxed);
        let fv = extract_features(blob);
        let shape = classify_shape(&fv, blob, &self.config.shape);
        let b = blob.bbox();
        let window = map_to_window((b.w, b.h), &self.family, extensible);
        Keyed { shape, window }
    }

    /// Normalizes the blob into `window` and computes its stored descriptor
    /// plus keypoint statistics of the normalized view.
    pub fn describe(&self, blob: &ObjectBlob, window: &ScaleWindow) -> Description {
        self.counters.normalize.fetch_add(1, Ordering::Relaxed);
        let norm = normalize(blob, window);
        let features = features_of_mask(&norm);

        self.counters.keypoint.fetch_add(1, Ordering::Relaxed);
        let pad = self.config.dog.pad;
        let side = norm.width() + 2 * pad;
        let mut canvas = FloatImage::filled(side, side, 0.0);
        for (x, y) in norm.foreground() {
            canvas.data[(y as usize + pad) * side + x as usize + pad] = 1.0;
        }
        let kps = detect_keypoints(&canvas, &self.config.dog.params(), self.config.dog.contrast_threshold);
        let keypoints = keypoint_stats(&kps);

        let features = if self.config.dog.append_stats_to_features {
            features.with_appended(&keypoints.as_array())
        } else {
            features
        };
        Description { features, keypoints }
    }

    fn check_dimension(&self, index: &GlobalIndex) -> Result<()> {
        match index.dimension() {
            Some(d) if d != self.config.feature_dim() => Err(Error::Dimension {
                expected: d,
                found: self.config.feature_dim(),
            }),
            _ => Ok(()),
        }
    }

    /// Trains one scene. Either every blob is inserted or, on error, none.
    pub fn train_scene(
        &self,
        img: &GrayImage,
        labels: &[String],
        scene: &str,
        index: &mut GlobalIndex,
    ) -> Result<TrainReport> {
        self.check_dimension(index)?;
        let blobs = self.blobs(img);
        if blobs.len() != labels.len() {
            return Err(Error::LabelMismatch {
                blobs: blobs.len(),
                labels: labels.len(),
            });
        }
        // describe everything before the first insert
        let prepared: Vec<(Keyed, Description)> = blobs
            .iter()
            .map(|b| {
                let k = self.key(b, true);
                let d = self.describe(b, &k.window);
                (k, d)
            })
            .collect();
        if prepared
            .iter()
            .any(|(_, d)| d.features.as_slice().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite);
        }

        let mut rows = Vec::with_capacity(blobs.len());
        for (i, ((k, d), label)) in prepared.into_iter().zip(labels).enumerate() {
            let ins = index.insert(
                k.shape,
                k.window,
                Member {
                    label: label.clone(),
                    features: d.features,
                    source: format!("{scene}#{i}"),
                },
            )?;
            rows.push(TrainRow {
                label: label.clone(),
                shape: k.shape,
                window: k.window,
                cluster_id: ins.cluster,
                created_new_cluster: ins.created,
            });
        }
        Ok(TrainReport {
            scene: scene.to_string(),
            blobs_found: blobs.len(),
            rows,
        })
    }

    /// Gated detection with the configured search mode.
    pub fn detect_scene(
        &self,
        img: &GrayImage,
        index: &GlobalIndex,
        tau: f64,
        slack: u32,
    ) -> Result<Vec<DetectionResult>> {
        self.check_dimension(index)?;
        let blobs = self.blobs(img);
        Ok(self.per_blob(&blobs, |i, b| self.detect_blob(i, b, index, tau, slack)))
    }

    /// Baseline: every cluster is scanned, whatever the blob's key.
    pub fn detect_exhaustive(&self, img: &GrayImage, index: &GlobalIndex, tau: f64) -> Result<Vec<DetectionResult>> {
        self.check_dimension(index)?;
        let blobs = self.blobs(img);
        Ok(self.per_blob(&blobs, |i, b| self.exhaustive_blob(i, b, index, tau)))
    }

    fn per_blob<F>(&self, blobs: &[ObjectBlob], f: F) -> Vec<DetectionResult>
    where
        F: Fn(usize, &ObjectBlob) -> DetectionResult + Sync,
    {
        if self.threads <= 1 || blobs.len() < 2 {
            return blobs.iter().enumerate().map(|(i, b)| f(i, b)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .expect("thread pool");
        pool.install(|| blobs.par_iter().enumerate().map(|(i, b)| f(i, b)).collect())
    }

    fn detect_blob(&self, ordinal: usize, blob: &ObjectBlob, index: &GlobalIndex, tau: f64, slack: u32) -> DetectionResult {
        let start = Instant::now();
        let k = self.key(blob, self.config.scale.extensible);
        let (res, keypoints) = if !index.by_shape().contains_key(&k.shape) {
            (Resolution::rejected(RejectReason::NoShapeCluster), None)
        } else if index.candidate_clusters(k.shape, k.window.index, slack).is_empty() {
            (Resolution::rejected(RejectReason::NoScaleCluster), None)
        } else {
            let d = self.describe(blob, &k.window);
            let res = resolve_gated(index, k.shape, k.window, &d.features, tau, slack, self.config.pipeline.mode);
            (res, Some(d.keypoints))
        };
        DetectionResult {
            blob: ordinal,
            outcome: res.outcome,
            shape: k.shape,
            window: k.window,
            clusters_visited: res.clusters_visited,
            members_compared: res.members_compared,
            elapsed_ns: start.elapsed().as_nanos() as u64,
            keypoints,
        }
    }

    fn exhaustive_blob(&self, ordinal: usize, blob: &ObjectBlob, index: &GlobalIndex, tau: f64) -> DetectionResult {
        let start = Instant::now();
        let k = self.key(blob, self.config.scale.extensible);
        let (res, keypoints) = if index.is_empty() {
            (Resolution::rejected(RejectReason::NoShapeCluster), None)
        } else {
            let d = self.describe(blob, &k.window);
            (resolve_exhaustive(index, &d.features, tau), Some(d.keypoints))
        };
        DetectionResult {
            blob: ordinal,
            outcome: res.outcome,
            shape: k.shape,
            window: k.window,
            clusters_visited: res.clusters_visited,
            members_compared: res.members_compared,
            elapsed_ns: start.elapsed().as_nanos() as u64,
            keypoints,
        }
    }
}

/// Resolves a described query against the clusters keyed by its shape and
/// window (within `slack`).
pub fn resolve_gated(
    index: &GlobalIndex,
    shape: ShapeClass,
    window: ScaleWindow,
    fv: &FeatureVector,
    tau: f64,
    slack: u32,
    mode: SearchMode,
) -> Resolution {
    if !index.by_shape().contains_key(&shape) {
        return Resolution::rejected(RejectReason::NoShapeCluster);
    }
    let candidates = index.candidate_clusters(shape, window.index, slack);
    if candidates.is_empty() {
        return Resolution::rejected(RejectReason::NoScaleCluster);
    }
    let ranked = index.rank_by_mean(&candidates, fv);
    let mut res = Resolution::rejected(RejectReason::DistanceExceedsTau);

    match mode {
        SearchMode::FirstBelowTau => {
            for id in ranked {
                res.clusters_visited += 1;
                res.members_compared += cluster_size(index, id);
                let (label, d) = index.nearest_member(id, fv);
                if d <= tau {
                    res.outcome = Outcome::Detected {
                        label: label.to_string(),
                        distance: d,
                    };
                    break;
                }
            }
        }
        SearchMode::ExactMin => {
            let mut best: Option<(&str, f64)> = None;
            for id in ranked {
                res.clusters_visited += 1;
                res.members_compared += cluster_size(index, id);
                let (label, d) = index.nearest_member(id, fv);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((label, d));
                }
            }
            if let Some((label, d)) = best.filter(|&(_, d)| d <= tau) {
                res.outcome = Outcome::Detected {
                    label: label.to_string(),
                    distance: d,
                };
            }
        }
        SearchMode::CentroidOnly => {
            // accept on the nearest mean; the member scan only names it
            let id = ranked[0];
            let d = index.cluster(id).expect("candidate id").mean().distance(fv);
            res.clusters_visited = 1;
            if d <= tau {
                res.members_compared = cluster_size(index, id);
                let (label, _) = index.nearest_member(id, fv);
                res.outcome = Outcome::Detected {
                    label: label.to_string(),
                    distance: d,
                };
            }
        }
    }
    res
}

/// Scans every cluster in id order and keeps the first global minimum.
pub fn resolve_exhaustive(index: &GlobalIndex, fv: &FeatureVector, tau: f64) -> Resolution {
    if index.is_empty() {
        return Resolution::rejected(RejectReason::NoShapeCluster);
    }
    let mut res = Resolution::rejected(RejectReason::DistanceExceedsTau);
    let mut best: Option<(&str, f64)> = None;
    for c in index.clusters() {
        res.clusters_visited += 1;
        res.members_compared += c.count() as u64;
        let (label, d) = index.nearest_member(c.id(), fv);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((label, d));
        }
    }
    if let Some((label, d)) = best.filter(|&(_, d)| d <= tau) {
        res.outcome = Outcome::Detected {
            label: label.to_string(),
            distance: d,
        };
    }
    res
}

fn cluster_size(index: &GlobalIndex, id: ClusterId) -> u64 {
    index.cluster(id).expect("candidate id").count() as u64
}

/// One JSON object per line.
pub fn to_json_lines(results: &[DetectionResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}
