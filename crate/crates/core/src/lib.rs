//! Geometric relevance metrics for steganalysis training sources.
//!
//! The crate measures how well a labeled training source matches an
//! unlabeled operational target using three discrepancies between feature
//! sets (centroid distance, energy-distance MMD and the normalized squared
//! chordal distance between PCA subspaces), selects training sources with
//! them, and synthesizes new sources by annealing over the parameters of a
//! simulated image-development pipeline.
//!
//! Module map:
//!
//! - [`features`]: DCTR-style JPEG-domain features and the feature-matrix file format.
//! - [`subspace`]: PCA subspaces, principal angles and NSCD.
//! - [`metrics`]: centroid distance, energy MMD, universe-level normalization.
//! - [`devsim`]: synthetic RAW textures and the denoise/resize/sharpen/crop/JPEG pipeline.
//! - [`stegodet`]: simulated ternary embedding, linear detectors, P_E and regret.
//! - [`select`]: the five source-selection strategies.
//! - [`optimize`]: simulated annealing over pipeline parameters.
//! - [`harness`]: the end-to-end universe experiment, reports and persistence.

mod dct;
pub mod devsim;
pub mod error;
pub mod features;
pub mod harness;
pub mod image;
mod linalg;
pub mod metrics;
pub mod optimize;
pub mod seeds;
pub mod select;
pub mod stats;
pub mod stegodet;
pub mod subspace;

pub use devsim::{PipelineParams, ResizeKernel, SourceManifest};
pub use error::{Error, Result};
pub use features::{DctrConfig, FeatureMatrix};
pub use metrics::{MetricKind, MetricValue};
pub use stegodet::{EmbedConfig, EvalReport, LinearDetector, RegretRecord};
pub use subspace::{AngleSpectrum, Subspace};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Identifier of a source (one development pipeline) in a universe.
///
/// Ordering is numeric and is the tie-break order used by every selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(pub u32);

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Config hash and seed stamped into every persisted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}
