//! Shape- and scale-gated object detection.
//!
//! Training scenes are segmented into blobs; each blob is classified into a
//! primitive shape, assigned a scale window and stored, as a feature vector,
//! in the cluster keyed by `(shape, window)`. A query blob only ever looks at
//! the clusters its own key selects, and is declared a new object without
//! touching any stored member when no such cluster exists.
//!
//! Modules, bottom-up:
//!
//! - [`image`]: gray/bit rasters and PGM I/O
//! - [`preprocess`]: thresholding, majority denoise, segmentation, thinning,
//!   window normalization
//! - [`features`]: the 12-component descriptor and the shape decision list
//! - [`scale`]: the doubling window family and binary-search window fit
//! - [`index`]: clusters with running means, the global index, persistence
//! - [`dog`]: Gaussian scale space, difference-of-Gaussian stack, extrema
//! - [`pipeline`]: training, gated detection and the exhaustive baseline
//! - [`bench`] and [`corpus`]: timing harness and synthetic shape scenes

pub mod bench;
pub mod config;
pub mod corpus;
pub mod dog;
pub mod error;
pub mod features;
pub mod image;
pub mod index;
pub mod pipeline;
pub mod preprocess;
pub mod scale;

pub use config::Config;
pub use error::{Error, Result};
pub use features::{FeatureVector, ShapeClass};
pub use image::{BinaryImage, GrayImage};
pub use index::{ClusterKey, GlobalIndex};
pub use pipeline::{DetectionResult, Engine, Outcome, TrainReport};
pub use preprocess::ObjectBlob;
pub use scale::ScaleWindow;
