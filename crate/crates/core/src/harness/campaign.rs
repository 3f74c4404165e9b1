//! Annealing campaign over the highest-regret source/target pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::artifacts::Artifacts;
use super::config::{AnnealCampaign, Scenario};
use super::data::{develop_pairs, fresh_raw_seeds};
use super::experiment::{scenario_rows, Universe};
use crate::devsim::{self, PipelineParams};
use crate::image::GrayImage;
use crate::error::Result;
use crate::optimize::{anneal, AnnealConfig, NscdObjective};
use crate::stegodet;
use crate::subspace::{pca_subspace, Subspace};
use crate::{seeds, SourceId};

/// Run index reserved for the shared raw pool.
const POOL_RUN: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub source_id: SourceId,
    pub target_id: SourceId,
    pub start_params: PipelineParams,
    pub best_params: PipelineParams,
    pub start_nscd: f64,
    pub best_nscd: f64,
    /// Regret of the original source detector.
    pub start_regret: f64,
    /// Regret of a detector trained on fresh data developed with `best_params`.
    pub final_regret: f64,
    pub trace_file: String,
}

impl AnnealOutcome {
    pub fn improved(&self) -> bool {
        self.final_regret < self.start_regret
    }
}

/// Off-diagonal pairs ordered by decreasing regret, ties by (source, target).
pub fn worst_pairs(u: &Universe, count: usize) -> Vec<(usize, usize)> {
    let n = u.sources.len();
    let mut pairs: Vec<(usize, usize)> = (0..n * n).map(|k| (k / n, k % n)).filter(|(s, t)| s != t).collect();
    pairs.sort_by(|a, b| u.regret.at(b.0, b.1).regret.total_cmp(&u.regret.at(a.0, a.1).regret).then(a.cmp(b)));
    pairs.truncate(count);
    pairs
}

/// Raw inputs shared by every objective of a campaign.
pub fn raw_pool(u: &Universe, campaign: &AnnealCampaign) -> Result<Vec<GrayImage>> {
    fresh_raw_seeds(&u.config, POOL_RUN, campaign.pool_size)
        .iter()
        .map(|&s| devsim::synth_raw(s, u.config.raw_size))
        .collect()
}

/// Subspace of the target's mixed operational set, the search goal.
pub fn target_subspace(u: &Universe, target: usize) -> Result<Subspace> {
    let rows = scenario_rows(Scenario::Mixed5050, u.config.n_operational);
    let set = u.sources[target].operational.both()?.select(&rows)?;
    pca_subspace(&set, u.config.variance_threshold)
}

pub fn objective<'a>(
    u: &Universe,
    campaign: &AnnealCampaign,
    target: usize,
    subspace: &'a Subspace,
    pool: &'a [GrayImage],
) -> Result<NscdObjective<'a>> {
    Ok(NscdObjective::new(
        subspace,
        pool,
        campaign.config.batch_size,
        seeds::derive(u.config.seed, &[seeds::tag::ANNEAL, target as u64]),
        u.config.dctr(),
        campaign.bounds.clone(),
    )?
    .with_variance_threshold(u.config.variance_threshold))
}

/// Annealing settings of the run for `(source, target)`.
pub fn run_config(campaign: &AnnealCampaign, source: SourceId, target: SourceId) -> AnnealConfig {
    AnnealConfig { seed: seeds::derive(campaign.config.seed, &[source.0 as u64, target.0 as u64]), ..campaign.config.clone() }
}

pub fn run_campaign(
    u: &Universe,
    campaign: &AnnealCampaign,
    artifacts: &mut Artifacts,
) -> Result<Vec<AnnealOutcome>> {
    let config = &u.config;
    let pairs = worst_pairs(u, campaign.scenarios);
    let pool = raw_pool(u, campaign)?;

    let mut targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    targets.sort_unstable();
    targets.dedup();
    let subspaces: BTreeMap<usize, Subspace> =
        targets.iter().map(|&t| Ok((t, target_subspace(u, t)?))).collect::<Result<_>>()?;
    let objectives: BTreeMap<usize, NscdObjective<'_>> = targets
        .iter()
        .map(|&t| Ok((t, objective(u, campaign, t, &subspaces[&t], &pool)?)))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(pairs.len());
    for (run, &(s, t)) in pairs.iter().enumerate() {
        let (sid, tid) = (u.sources[s].manifest.source_id, u.sources[t].manifest.source_id);
        let start = u.sources[s].manifest.params;
        let trace = anneal(&start, &objectives[&t], &campaign.bounds, &run_config(campaign, sid, tid))?;
        let trace_file = format!("curves/anneal_{:04}_{:04}.csv", sid.0, tid.0);
        artifacts.csv(&trace_file, &trace.to_csv()?)?;

        let fresh = fresh_raw_seeds(config, run as u64, config.n_train);
        let data = develop_pairs(config, &trace.best_params, &fresh, &format!("anneal/{run}"))?;
        let (det, _) = stegodet::train_detector(&data.covers, &data.stegos, &config.detector, sid)?;
        let tr = u.regret.at(t, t);
        let final_regret = u.eval_sets[&tid].p_e(&det)? - tr.intrinsic_pe;
        out.push(AnnealOutcome {
            source_id: sid,
            target_id: tid,
            start_params: start,
            best_params: trace.best_params,
            start_nscd: trace.records[0].nscd,
            best_nscd: trace.best_nscd,
            start_regret: u.regret.at(s, t).regret,
            final_regret,
            trace_file,
        });
    }
    artifacts.json("reports/anneal.json", &out)?;
    Ok(out)
}
