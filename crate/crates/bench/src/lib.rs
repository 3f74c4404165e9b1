//! Criterion benchmarks for the stegogeom kernels; see `benches/`.

use stegogeom::devsim::{self, PipelineParams};
use stegogeom::features::{extract_dctr, DctrConfig};
use stegogeom::image::GrayImage;
use stegogeom::FeatureMatrix;

/// A developed 64×64 cover.
pub fn cover(seed: u64) -> GrayImage {
    let raw = devsim::synth_raw(seed, 128).expect("raw");
    devsim::develop(&raw, &PipelineParams::default()).expect("develop").image
}

/// Feature rows of `n` developed covers.
pub fn features(n: usize, seed: u64) -> FeatureMatrix {
    let cfg = DctrConfig::default();
    let rows = (0..n as u64).map(|i| extract_dctr(&cover(seed + i), &cfg).expect("features")).collect();
    FeatureMatrix::from_vectors(rows, (0..n).map(|i| i.to_string()).collect()).expect("matrix")
}
