//! Shape x scale clusters and the global index that locates them.
//!
//! Clusters are append-only. Each keeps its members in insertion order and a
//! running mean updated as `mean += (v - mean) / count`. The index keeps two
//! views of the same cluster set: key -> cluster id, and shape -> sorted
//! window indices. Both are updated inside [`GlobalIndex::insert`], which
//! takes `&mut self`, so readers never observe one without the other.

mod persist;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use persist::{atomic_write, LoadedIndex, SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, ShapeClass};
use crate::scale::ScaleWindow;

pub type ClusterId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    pub shape: ShapeClass,
    /// 1-based scale window index.
    pub window: u32,
}

impl ClusterKey {
    pub fn new(shape: ShapeClass, window: u32) -> Self {
        Self { shape, window }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub label: String,
    pub features: FeatureVector,
    /// Where the training view came from, e.g. `scene.pgm#2`.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    id: ClusterId,
    key: ClusterKey,
    window_side: u32,
    members: Vec<Member>,
    mean: FeatureVector,
}

/// Best member of a cluster for a query vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    /// Position of the member in insertion order.
    pub member: usize,
    pub distance: f64,
}

impl Cluster {
    pub fn id(&self) -> ClusterId {
        self.id
    }

    pub fn key(&self) -> ClusterKey {
        self.key
    }

    pub fn window_side(&self) -> u32 {
        self.window_side
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn mean(&self) -> &FeatureVector {
        &self.mean
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// Linear scan for the closest member; the earliest-inserted member wins
    /// ties.
    pub fn nearest(&self, fv: &FeatureVector) -> Nearest {
        let mut best = Nearest {
            member: 0,
            distance: f64::INFINITY,
        };
        for (i, m) in self.members.iter().enumerate() {
            let d = m.features.distance(fv);
            if d < best.distance {
                best = Nearest {
                    member: i,
                    distance: d,
                };
            }
        }
        best
    }

    fn push(&mut self, member: Member) {
        let n = (self.members.len() + 1) as f64;
        for (m, v) in self
            .mean
            .as_mut_slice()
            .iter_mut()
            .zip(member.features.as_slice())
        {
            *m += (v - *m) / n;
        }
        self.members.push(member);
    }
}

/// Result of an insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inserted {
    pub cluster: ClusterId,
    pub created: bool,
}

/// All clusters plus the key and shape lookups over them.
#[derive(Debug, Default)]
pub struct GlobalIndex {
    clusters: Vec<Cluster>,
    by_key: BTreeMap<ClusterKey, ClusterId>,
    by_shape: BTreeMap<ShapeClass, Vec<u32>>,
    comparisons: AtomicU64,
}

impl Clone for GlobalIndex {
    fn clone(&self) -> Self {
        Self {
            clusters: self.clusters.clone(),
            by_key: self.by_key.clone(),
            by_shape: self.by_shape.clone(),
            comparisons: AtomicU64::new(self.comparisons()),
        }
    }
}

/// Structural equality; the comparison counter is instrumentation and is
/// ignored.
impl PartialEq for GlobalIndex {
    fn eq(&self, other: &Self) -> bool {
        self.clusters == other.clusters
            && self.by_key == other.by_key
            && self.by_shape == other.by_shape
    }
}

impl GlobalIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get((id as usize).checked_sub(1)?)
    }

    pub fn by_key(&self) -> &BTreeMap<ClusterKey, ClusterId> {
        &self.by_key
    }

    pub fn by_shape(&self) -> &BTreeMap<ShapeClass, Vec<u32>> {
        &self.by_shape
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(Cluster::count).sum()
    }

    /// Feature dimension shared by every stored vector, if any are stored.
    pub fn dimension(&self) -> Option<usize> {
        self.clusters.first().map(|c| c.mean.len())
    }

    /// Member comparisons made through [`GlobalIndex::nearest_member`].
    pub fn comparisons(&self) -> u64 {
        self.comparisons.load(Ordering::Relaxed)
    }

    pub fn reset_comparisons(&self) {
        self.comparisons.store(0, Ordering::Relaxed);
    }

    /// Appends a member to the cluster for `(shape, window)`, creating the
    /// cluster first if needed.
    pub fn insert(&mut self, shape: ShapeClass, window: ScaleWindow, member: Member) -> Result<Inserted> {
        if let Some(dim) = self.dimension() {
            if member.features.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: member.features.len(),
                });
            }
        }
        if member.features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let key = ClusterKey::new(shape, window.index);
        if let Some(&id) = self.by_key.get(&key) {
            self.clusters[id as usize - 1].push(member);
            return Ok(Inserted {
                cluster: id,
                created: false,
            });
        }

        let id = self.clusters.len() as ClusterId + 1;
        self.clusters.push(Cluster {
            id,
            key,
            window_side: window.side,
            mean: member.features.clone(),
            members: vec![member],
        });
        self.by_key.insert(key, id);
        let windows = self.by_shape.entry(shape).or_default();
        let at = windows.partition_point(|&w| w < window.index);
        windows.insert(at, window.index);
        Ok(Inserted {
            cluster: id,
            created: true,
        })
    }

    pub fn lookup(&self, key: ClusterKey) -> Option<ClusterId> {
        self.by_key.get(&key).copied()
    }

    /// Clusters of `shape` whose window lies within `slack` of `window`,
    /// closest window first, ties broken by the smaller window.
    pub fn candidate_clusters(&self, shape: ShapeClass, window: u32, slack: u32) -> Vec<ClusterId> {
        let Some(windows) = self.by_shape.get(&shape) else {
            return Vec::new();
        };
        let lo = window.saturating_sub(slack);
        let hi = window.saturating_add(slack);
        let start = windows.partition_point(|&w| w < lo);
        let mut found: Vec<u32> = windows[start..]
            .iter()
            .copied()
            .take_while(|&w| w <= hi)
            .collect();
        found.sort_by_key(|&w| (w.abs_diff(window), w));
        found
            .into_iter()
            .map(|w| self.by_key[&ClusterKey::new(shape, w)])
            .collect()
    }

    /// Nearest member of cluster `id`; counts one comparison per member.
    ///
    /// Returns the member's label and its distance.
    pub fn nearest_member(&self, id: ClusterId, fv: &FeatureVector) -> (&str, f64) {
        let cluster = self.cluster(id).expect("cluster id from this index");
        self.comparisons
            .fetch_add(cluster.count() as u64, Ordering::Relaxed);
        let best = cluster.nearest(fv);
        (&cluster.members[best.member].label, best.distance)
    }

    /// Stable sort of `ids` by distance from `fv` to each cluster mean.
    pub fn rank_by_mean(&self, ids: &[ClusterId], fv: &FeatureVector) -> Vec<ClusterId> {
        let mut keyed: Vec<(f64, ClusterId)> = ids
            .iter()
            .map(|&id| {
                let c = self.cluster(id).expect("cluster id from this index");
                (c.mean.distance(fv), id)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        keyed.into_iter().map(|(_, id)| id).collect()
    }

    /// Checks that both lookups describe exactly the stored clusters.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        if self.by_key.len() != self.clusters.len() {
            return Err(format!(
                "{} keys for {} clusters",
                self.by_key.len(),
                self.clusters.len()
            ));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.id as usize != i + 1 {
                return Err(format!("cluster at position {i} has id {}", c.id));
            }
            if c.members.is_empty() {
                return Err(format!("cluster {} is empty", c.id));
            }
            if self.by_key.get(&c.key) != Some(&c.id) {
                return Err(format!("cluster {} missing from key map", c.id));
            }
            let listed = self
                .by_shape
                .get(&c.key.shape)
                .is_some_and(|ws| ws.binary_search(&c.key.window).is_ok());
            if !listed {
                return Err(format!("cluster {} missing from shape map", c.id));
            }
        }
        let shape_entries: usize = self.by_shape.values().map(Vec::len).sum();
        if shape_entries != self.clusters.len() {
            return Err(format!(
                "{shape_entries} shape entries for {} clusters",
                self.clusters.len()
            ));
        }
        for (shape, ws) in &self.by_shape {
            if ws.windows(2).any(|p| p[0] >= p[1]) {
                return Err(format!("{shape} windows not strictly ascending"));
            }
        }
        Ok(())
    }

    fn from_clusters(clusters: Vec<Cluster>) -> Self {
        let mut index = Self {
            clusters,
            ..Self::default()
        };
        for c in &index.clusters {
            index.by_key.insert(c.key, c.id);
            index.by_shape.entry(c.key.shape).or_default().push(c.key.window);
        }
        for ws in index.by_shape.values_mut() {
            ws.sort_unstable();
        }
        index
    }
}
