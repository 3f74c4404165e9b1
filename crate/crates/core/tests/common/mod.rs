#![allow(dead_code)]

use stegogeom::devsim::UniverseGrid;
use stegogeom::harness::{AnnealCampaign, ExperimentConfig};
use stegogeom::optimize::AnnealConfig;

/// Four sources, forty images per split.
pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let grid = UniverseGrid {
        denoise_sigma: vec![0.0, 2.0],
        resize_factor: vec![1.0],
        sharpen_amount: vec![0.0, 1.8],
        ..UniverseGrid::desk()
    };
    ExperimentConfig {
        seed,
        grid,
        n_train: 40,
        n_eval: 40,
        n_operational: 40,
        sample_sizes: vec![10, 40],
        ..ExperimentConfig::default()
    }
}

pub fn with_anneal(mut c: ExperimentConfig) -> ExperimentConfig {
    c.anneal = Some(AnnealCampaign {
        scenarios: 2,
        config: AnnealConfig { max_iters: 4, batch_size: 30, ..AnnealConfig::default() },
        pool_size: 30,
        ..AnnealCampaign::default()
    });
    c
}
