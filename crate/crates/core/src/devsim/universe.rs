//! Cartesian pipeline grids and per-source manifests.

use serde::{Deserialize, Serialize};

use super::params::{PipelineParams, ResizeKernel};
use crate::error::{Error, Result};
use crate::seeds;
use crate::SourceId;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Value lists for the three varied factors; the rest are held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseGrid {
    pub denoise_sigma: Vec<f64>,
    pub resize_factor: Vec<f64>,
    pub sharpen_amount: Vec<f64>,
    pub resize_kernel: ResizeKernel,
    pub sharpen_radius: f64,
    pub crop_size: usize,
    pub jpeg_qf: u8,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl UniverseGrid {
    /// 10 × 10 × 10 grid at crop 256.
    pub fn full() -> Self {
        Self {
            denoise_sigma: linspace(0.0, 2.0, 10),
            resize_factor: linspace(0.5, 1.0, 10),
            sharpen_amount: linspace(0.0, 1.8, 10),
            resize_kernel: ResizeKernel::Bilinear,
            sharpen_radius: 1.0,
            crop_size: 256,
            jpeg_qf: 85,
        }
    }

    /// 3 × 3 × 3 grid at crop 64.
    pub fn desk() -> Self {
        Self {
            denoise_sigma: vec![0.0, 1.0, 2.0],
            resize_factor: vec![0.5, 0.75, 1.0],
            sharpen_amount: vec![0.0, 0.9, 1.8],
            crop_size: 64,
            ..Self::full()
        }
    }

    pub fn len(&self) -> usize {
        self.denoise_sigma.len() * self.resize_factor.len() * self.sharpen_amount.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Combinations in denoise-major, sharpen-minor order.
    pub fn combinations(&self) -> Vec<PipelineParams> {
        let mut out = Vec::with_capacity(self.len());
        for &denoise_sigma in &self.denoise_sigma {
            for &resize_factor in &self.resize_factor {
                for &sharpen_amount in &self.sharpen_amount {
                    out.push(PipelineParams {
                        denoise_sigma,
                        resize_factor,
                        resize_kernel: self.resize_kernel,
                        sharpen_amount,
                        sharpen_radius: self.sharpen_radius,
                        crop_size: self.crop_size,
                        jpeg_qf: self.jpeg_qf,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceManifest {
    pub schema_version: u32,
    pub source_id: SourceId,
    pub params: PipelineParams,
    /// Seeds of the raw inputs developed by this source.
    pub image_ids: Vec<u64>,
    pub seed: u64,
}

impl SourceManifest {
    pub fn new(source_id: SourceId, params: PipelineParams, n_images: usize, seed: u64) -> Self {
        let image_ids = (0..n_images as u64)
            .map(|i| seeds::derive(seed, &[seeds::tag::SOURCE, source_id.0 as u64, i]))
            .collect();
        Self { schema_version: MANIFEST_SCHEMA_VERSION, source_id, params, image_ids, seed }
    }
}

pub fn build_universe(grid: &UniverseGrid, n_images: usize, seed: u64) -> Result<Vec<SourceManifest>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let combos = grid.combinations();
    for p in &combos {
        p.validate()?;
    }
    Ok(combos
        .into_iter()
        .enumerate()
        .map(|(i, p)| SourceManifest::new(SourceId(i as u32), p, n_images, seed))
        .collect())
}
