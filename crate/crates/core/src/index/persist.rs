//! Single-file JSON database.
//!
//! ```text
//! { "version": 1,
//!   "checksum": "<crc32 hex of the canonical clusters array>",
//!   "config_fingerprint": "...",
//!   "clusters": [ { "id", "shape_code", "window_index", "window_side",
//!                   "mean": [..], "members": [ { "label", "features", "source" } ] } ] }
//! ```
//!
//! The canonical form of `clusters` is its compact serialization with object
//! keys sorted, which is what a parsed `serde_json::Value` re-serializes to.
//! Floats use shortest round-trip formatting, so load(save(x)) is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Cluster, ClusterKey, GlobalIndex, Member};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, ShapeClass};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ClusterRecord {
    id: u32,
    shape_code: u8,
    window_index: u32,
    window_side: u32,
    mean: Vec<f64>,
    members: Vec<MemberRecord>,
}

#[derive(Serialize, Deserialize)]
struct MemberRecord {
    label: String,
    features: Vec<f64>,
    source: String,
}

#[derive(Serialize)]
struct DbFileOut<'a> {
    version: u64,
    checksum: String,
    config_fingerprint: &'a str,
    clusters: Value,
}

#[derive(Deserialize)]
struct DbFileIn {
    version: u64,
    checksum: String,
    config_fingerprint: String,
    clusters: Value,
}

/// An index read back from disk together with the fingerprint it was saved
/// under.
#[derive(Debug)]
pub struct LoadedIndex {
    pub index: GlobalIndex,
    pub fingerprint: String,
}

fn checksum(clusters: &Value) -> String {
    let canonical = serde_json::to_string(clusters).expect("serializable value");
    format!("{:08x}", crc32fast::hash(canonical.as_bytes()))
}

impl GlobalIndex {
    pub fn to_json_bytes(&self, fingerprint: &str) -> Vec<u8> {
        let records: Vec<ClusterRecord> = self
            .clusters
            .iter()
            .map(|c| ClusterRecord {
                id: c.id,
                shape_code: c.key.shape.code(),
                window_index: c.key.window,
                window_side: c.window_side,
                mean: c.mean.as_slice().to_vec(),
                members: c
                    .members
                    .iter()
                    .map(|m| MemberRecord {
                        label: m.label.clone(),
                        features: m.features.as_slice().to_vec(),
                        source: m.source.clone(),
                    })
                    .collect(),
            })
            .collect();
        let clusters = serde_json::to_value(records).expect("records serialize");
        let doc = DbFileOut {
            version: SCHEMA_VERSION,
            checksum: checksum(&clusters),
            config_fingerprint: fingerprint,
            clusters,
        };
        let mut out = serde_json::to_vec_pretty(&doc).expect("document serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<LoadedIndex> {
        let raw: Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(format!("not valid JSON: {e}")))?;
        // version first so a future layout reports as a version problem
        match raw.get("version").and_then(Value::as_u64) {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::SchemaVersion(v)),
            None => return Err(Error::Corrupt("missing version".into())),
        }
        let doc: DbFileIn =
            serde_json::from_value(raw).map_err(|e| Error::Corrupt(format!("bad layout: {e}")))?;
        debug_assert_eq!(doc.version, SCHEMA_VERSION);
        let actual = checksum(&doc.clusters);
        if actual != doc.checksum {
            return Err(Error::Corrupt(format!(
                "checksum mismatch: stored {}, computed {actual}",
                doc.checksum
            )));
        }
        let records: Vec<ClusterRecord> = serde_json::from_value(doc.clusters)
            .map_err(|e| Error::Corrupt(format!("bad cluster record: {e}")))?;

        let mut clusters = Vec::with_capacity(records.len());
        let mut dim = None;
        for (i, r) in records.into_iter().enumerate() {
            let shape = ShapeClass::from_code(r.shape_code)
                .ok_or_else(|| Error::Corrupt(format!("unknown shape code {}", r.shape_code)))?;
            if r.id as usize != i + 1 {
                return Err(Error::Corrupt(format!("cluster ids not sequential at {}", r.id)));
            }
            if r.members.is_empty() {
                return Err(Error::Corrupt(format!("cluster {} has no members", r.id)));
            }
            if r.window_index == 0 {
                return Err(Error::Corrupt(format!("cluster {} has window index 0", r.id)));
            }
            let d = *dim.get_or_insert(r.mean.len());
            if r.mean.len() != d || r.members.iter().any(|m| m.features.len() != d) {
                return Err(Error::Corrupt(format!("cluster {} mixes feature dimensions", r.id)));
            }
            clusters.push(Cluster {
                id: r.id,
                key: ClusterKey::new(shape, r.window_index),
                window_side: r.window_side,
                mean: FeatureVector::new(r.mean),
                members: r
                    .members
                    .into_iter()
                    .map(|m| Member {
                        label: m.label,
                        features: FeatureVector::new(m.features),
                        source: m.source,
                    })
                    .collect(),
            });
        }
        let index = GlobalIndex::from_clusters(clusters);
        index.check_consistency().map_err(Error::Corrupt)?;
        Ok(LoadedIndex {
            index,
            fingerprint: doc.config_fingerprint,
        })
    }

    /// Writes the database atomically (temporary file, then rename).
    pub fn save(&self, path: impl AsRef<Path>, fingerprint: &str) -> Result<()> {
        atomic_write(path.as_ref(), &self.to_json_bytes(fingerprint), || Ok(()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedIndex> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_bytes(&bytes)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
///
/// `before_rename` runs after the temporary file is durable; an error from it
/// aborts the write and leaves `path` untouched.
pub fn atomic_write(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> Result<()>,
) -> Result<()> {
    use std::io::Write;

    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "db".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        before_rename()?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}
