//! Developing, embedding and featurizing the images of a source.

use rayon::prelude::*;

use super::config::{ExperimentConfig, Scenario};
use crate::devsim::{self, SourceManifest};
use crate::error::Result;
use crate::features::{extract_dctr, FeatureMatrix};
use crate::stegodet::{self, EvalSet};
use crate::{seeds, PipelineParams};

/// Cover and stego features of the same raw inputs, row-aligned.
#[derive(Debug, Clone)]
pub struct PairedFeatures {
    pub covers: FeatureMatrix,
    pub stegos: FeatureMatrix,
}

impl PairedFeatures {
    pub fn n(&self) -> usize {
        self.covers.n()
    }

    pub fn both(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::concat(&[&self.covers, &self.stegos])
    }

    /// Operational set under a balance scenario: all covers, all stegos, or
    /// covers of the first half of the inputs and stegos of the second half.
    pub fn scenario(&self, scenario: Scenario) -> Result<FeatureMatrix> {
        match scenario {
            Scenario::CoversOnly => Ok(self.covers.clone()),
            Scenario::StegosOnly => Ok(self.stegos.clone()),
            Scenario::Mixed5050 => {
                let half = self.n() / 2;
                let first: Vec<usize> = (0..half).collect();
                let second: Vec<usize> = (half..self.n()).collect();
                FeatureMatrix::concat(&[&self.covers.select(&first)?, &self.stegos.select(&second)?])
            }
        }
    }
}

/// Develops every raw seed under `params`, embeds each cover, and extracts
/// features of both. Row ids are `{tag}/{index}/c` and `{tag}/{index}/s`.
pub fn develop_pairs(config: &ExperimentConfig, params: &PipelineParams, raw_seeds: &[u64], tag: &str) -> Result<PairedFeatures> {
    let dctr = config.dctr();
    let rows = raw_seeds
        .par_iter()
        .map(|&raw_seed| {
            let raw = devsim::synth_raw(raw_seed, config.raw_size)?;
            let dev = devsim::develop(&raw, params)?;
            let embed_seed = seeds::derive(config.seed, &[seeds::tag::EMBED, config.embed.seed, raw_seed]);
            let stego = stegodet::embed(&dev.coefficients, &config.embed.with_seed(embed_seed))?;
            let cover_f = extract_dctr(&dev.image, &dctr)?;
            let stego_f = extract_dctr(&devsim::decompress(&stego.stego), &dctr)?;
            Ok((cover_f, stego_f))
        })
        .collect::<Result<Vec<_>>>()?;
    let (c, s): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let ids = |suffix: &str| (0..raw_seeds.len()).map(|i| format!("{tag}/{i}/{suffix}")).collect();
    Ok(PairedFeatures { covers: FeatureMatrix::from_vectors(c, ids("c"))?, stegos: FeatureMatrix::from_vectors(s, ids("s"))? })
}

/// All feature sets of one universe source.
#[derive(Debug, Clone)]
pub struct SourceData {
    pub manifest: SourceManifest,
    pub train: PairedFeatures,
    pub eval: PairedFeatures,
    pub operational: PairedFeatures,
}

impl SourceData {
    pub fn eval_set(&self) -> Result<EvalSet> {
        EvalSet::new(self.eval.covers.clone(), self.eval.stegos.clone())
    }
}

pub fn develop_source(config: &ExperimentConfig, manifest: &SourceManifest) -> Result<SourceData> {
    let ids = &manifest.image_ids;
    let (a, b) = (config.n_train, config.n_train + config.n_eval);
    let tag = |part: &str| format!("{}/{part}", manifest.source_id);
    Ok(SourceData {
        manifest: manifest.clone(),
        train: develop_pairs(config, &manifest.params, &ids[..a], &tag("train"))?,
        eval: develop_pairs(config, &manifest.params, &ids[a..b], &tag("eval"))?,
        operational: develop_pairs(config, &manifest.params, &ids[b..], &tag("op"))?,
    })
}

/// Fresh raw seeds outside every manifest, for sources synthesized after the fact.
pub fn fresh_raw_seeds(config: &ExperimentConfig, run: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seeds::derive(config.seed, &[seeds::tag::RAW_ANNEAL, run, i])).collect()
}
