//! Engine configuration, read from a TOML file with the sections
//! `[preprocess]`, `[shape]`, `[scale]`, `[dog]` and `[pipeline]`.
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dog::ScaleSpaceParams;
use crate::error::{Error, Result};
use crate::features::ShapeThresholds;
use crate::preprocess::{Connectivity, Threshold};
use crate::scale::{generate_windows, WindowFamily};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preprocess: PreprocessConfig,
    pub shape: ShapeThresholds,
    pub scale: ScaleConfig,
    pub dog: DogConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub threshold: Threshold,
    pub denoise: bool,
    pub denoise_radius: usize,
    pub connectivity: Connectivity,
    pub min_area: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            threshold: Threshold::Otsu,
            denoise: true,
            denoise_radius: 1,
            connectivity: Connectivity::Eight,
            min_area: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub base: u32,
    pub count: u32,
    /// Query-time behaviour for boxes beyond the largest window. Training
    /// always extends.
    pub extensible: bool,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            base: 4,
            count: 5,
            extensible: true,
        }
    }
}

impl ScaleConfig {
    pub fn family(&self) -> WindowFamily {
        generate_windows(self.base, self.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DogConfig {
    pub octaves: usize,
    pub scales: usize,
    pub sigma0: f64,
    pub contrast_threshold: f64,
    pub append_stats_to_features: bool,
    /// Background margin added around a normalized blob before keypoint
    /// detection.
    pub pad: usize,
}

impl Default for DogConfig {
    fn default() -> Self {
        let p = ScaleSpaceParams::default();
        Self {
            octaves: p.octaves,
            scales: p.scales_per_octave,
            sigma0: p.sigma0,
            contrast_threshold: 0.015,
            append_stats_to_features: false,
            pad: 4,
        }
    }
}

impl DogConfig {
    pub fn params(&self) -> ScaleSpaceParams {
        ScaleSpaceParams {
            octaves: self.octaves,
            scales_per_octave: self.scales,
            sigma0: self.sigma0,
        }
    }
}

/// How the gated search resolves a query against its candidate clusters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Visit clusters by mean distance; stop at the first whose nearest
    /// member is within tau.
    #[default]
    FirstBelowTau,
    /// Visit every candidate and keep the global minimum.
    ExactMin,
    /// Match against cluster means only; the label is the nearest member of
    /// the winning cluster.
    CentroidOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau: f64,
    pub slack: u32,
    pub mode: SearchMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 0.25,
            slack: 0,
            mode: SearchMode::FirstBelowTau,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.preprocess.denoise && self.preprocess.denoise_radius == 0 {
            return bad("preprocess.denoise_radius must be >= 1");
        }
        if self.scale.base == 0 || self.scale.count == 0 {
            return bad("scale.base and scale.count must be >= 1");
        }
        if self.scale.base.checked_shl(self.scale.count - 1).is_none() || self.scale.count > 31 {
            return bad("scale family overflows");
        }
        if self.dog.octaves == 0 || self.dog.scales == 0 {
            return bad("dog.octaves and dog.scales must be >= 1");
        }
        if !(self.dog.sigma0 > 0.0 && self.dog.sigma0.is_finite()) {
            return bad("dog.sigma0 must be positive");
        }
        if !(self.dog.contrast_threshold >= 0.0) {
            return bad("dog.contrast_threshold must be >= 0");
        }
        if !(self.pipeline.tau > 0.0) {
            return bad("pipeline.tau must be positive");
        }
        Ok(())
    }

    /// Dimension of the vectors stored in the index.
    pub fn feature_dim(&self) -> usize {
        crate::features::BASE_DIM + if self.dog.append_stats_to_features { 3 } else { 0 }
    }

    /// Hash of everything that decides which cluster a blob lands in and
    /// what its vector looks like: shape thresholds, window family and the
    /// keypoint-append flag. A database is only queried under a matching
    /// fingerprint.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            shape: &'a ShapeThresholds,
            base: u32,
            count: u32,
            append_stats: bool,
        }
        let canonical = serde_json::to_string(&Keyed {
            shape: &self.shape,
            base: self.scale.base,
            count: self.scale.count,
            append_stats: self.dog.append_stats_to_features,
        })
        .expect("fingerprint input serializes");
        format!("{:08x}", crc32fast::hash(canonical.as_bytes()))
    }
}
