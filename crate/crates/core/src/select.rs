//! Source-selection strategies for an unlabeled operational set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::{self, MetricKind};
use crate::stegodet::{train_detector, DetectorConfig, LinearDetector, RegretMatrix};
use crate::subspace::{self, Subspace, DEFAULT_VARIANCE_THRESHOLD};
use crate::{stats, SourceId};

pub const DEFAULT_REGRET_THRESHOLD: f64 = 0.05;
pub const DEFAULT_DECILE: f64 = 0.10;
/// Minimum samples per class for the source classifier.
pub const MIN_CLASS_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    MultiClassifier,
    MajorityVote,
    MinL2cg,
    MinMmd,
    MinNscd,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::MultiClassifier,
        StrategyKind::MajorityVote,
        StrategyKind::MinL2cg,
        StrategyKind::MinMmd,
        StrategyKind::MinNscd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::MultiClassifier => "MULTI_CLASSIFIER",
            StrategyKind::MajorityVote => "MAJORITY_VOTE",
            StrategyKind::MinL2cg => "MIN_L2CG",
            StrategyKind::MinMmd => "MIN_MMD",
            StrategyKind::MinNscd => "MIN_NSCD",
        }
    }

    pub fn metric(self) -> Option<MetricKind> {
        match self {
            StrategyKind::MinL2cg => Some(MetricKind::L2Cg),
            StrategyKind::MinMmd => Some(MetricKind::EnergyMmd),
            StrategyKind::MinNscd => Some(MetricKind::Nscd),
            _ => None,
        }
    }

    pub fn for_metric(kind: MetricKind) -> Self {
        match kind {
            MetricKind::L2Cg => StrategyKind::MinL2cg,
            MetricKind::EnergyMmd => StrategyKind::MinMmd,
            MetricKind::Nscd => StrategyKind::MinNscd,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chosen {
    Source(SourceId),
    PerImage(Vec<SourceId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub strategy: StrategyKind,
    pub chosen: Chosen,
    /// Metric value per candidate, for the min-metric strategies.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_scores: Vec<(SourceId, f64)>,
    pub achieved_regret: Option<f64>,
}

impl SelectionOutcome {
    pub fn single(&self) -> Option<SourceId> {
        match self.chosen {
            Chosen::Source(id) => Some(id),
            Chosen::PerImage(_) => None,
        }
    }
}

/// Greedy set cover of the targets by sources with regret below `threshold`.
pub fn extract_representatives(matrix: &RegretMatrix, threshold: f64) -> Result<Vec<SourceId>> {
    let n = matrix.len();
    let covers: Vec<Vec<bool>> = (0..n).map(|s| (0..n).map(|t| matrix.at(s, t).regret < threshold).collect()).collect();
    let orphans: Vec<SourceId> = (0..n).filter(|&t| !(0..n).any(|s| covers[s][t])).map(|t| matrix.ids()[t]).collect();
    if !orphans.is_empty() {
        return Err(Error::OrphanTargets(orphans));
    }
    let mut uncovered = vec![true; n];
    let mut chosen = Vec::new();
    while uncovered.iter().any(|&u| u) {
        // ids are sorted, so the first maximum is the smallest id
        let (best, gain) = (0..n)
            .map(|s| (s, (0..n).filter(|&t| uncovered[t] && covers[s][t]).count()))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        debug_assert!(gain > 0);
        for t in 0..n {
            if covers[best][t] {
                uncovered[t] = false;
            }
        }
        chosen.push(matrix.ids()[best]);
    }
    chosen.sort();
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub source_id: SourceId,
    pub target_id: SourceId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePairs {
    pub decile: f64,
    pub quantile: f64,
    /// Candidate sources per target, sorted.
    pub admissible: BTreeMap<SourceId, Vec<SourceId>>,
    /// Pairs removed because their value fell strictly below the quantile.
    pub excluded: Vec<PairValue>,
}

impl AdmissiblePairs {
    pub fn candidates(&self, target: SourceId) -> &[SourceId] {
        self.admissible.get(&target).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_admissible(&self, source: SourceId, target: SourceId) -> bool {
        self.candidates(target).binary_search(&source).is_ok()
    }
}

/// Drops (source, target) pairs whose value lies strictly below the
/// `decile` sample quantile of all values.
pub fn filter_close_pairs(values: &[PairValue], decile: f64) -> Result<AdmissiblePairs> {
    if values.is_empty() {
        return Err(Error::EmptySet("pair values"));
    }
    if !(0.0..=1.0).contains(&decile) {
        return Err(Error::InvalidParameter(format!("decile must be in [0, 1], got {decile}")));
    }
    let raw: Vec<f64> = values.iter().map(|p| p.value).collect();
    let quantile = stats::quantile(&raw, decile).ok_or(Error::NonFinite("pair values"))?;
    let mut admissible: BTreeMap<SourceId, Vec<SourceId>> = BTreeMap::new();
    let mut excluded = Vec::new();
    for p in values {
        let entry = admissible.entry(p.target_id).or_default();
        if p.value < quantile {
            excluded.push(*p);
        } else {
            entry.push(p.source_id);
        }
    }
    for (target, list) in admissible.iter_mut() {
        if list.is_empty() {
            return Err(Error::AllPairsFiltered(*target));
        }
        list.sort();
        list.dedup();
    }
    Ok(AdmissiblePairs { decile, quantile, admissible, excluded })
}

/// Smallest score wins, ties by smallest id.
pub fn argmin_by_id(scores: &[(SourceId, f64)]) -> Result<SourceId> {
    scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
        .ok_or(Error::EmptyCandidates)
}

/// A candidate training source: its features and optionally a precomputed subspace.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: SourceId,
    pub features: &'a FeatureMatrix,
    pub subspace: Option<&'a Subspace>,
}

pub fn select_min_metric(candidates: &[Candidate<'_>], operational: &FeatureMatrix, kind: MetricKind) -> Result<SelectionOutcome> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let target_subspace = match kind {
        MetricKind::Nscd => Some(subspace::pca_subspace(operational, DEFAULT_VARIANCE_THRESHOLD)?),
        _ => None,
    };
    let scores: Vec<(SourceId, f64)> = candidates
        .par_iter()
        .map(|c| {
            let v = match kind {
                MetricKind::L2Cg => metrics::l2_cg(c.features, operational)?.value,
                MetricKind::EnergyMmd => metrics::energy_mmd(c.features, operational)?.value,
                MetricKind::Nscd => {
                    let target = target_subspace.as_ref().expect("built above");
                    match c.subspace {
                        Some(s) => subspace::nscd(s, target)?,
                        None => subspace::nscd(&subspace::pca_subspace(c.features, DEFAULT_VARIANCE_THRESHOLD)?, target)?,
                    }
                }
            };
            Ok((c.id, v))
        })
        .collect::<Result<_>>()?;
    Ok(SelectionOutcome {
        strategy: StrategyKind::for_metric(kind),
        chosen: Chosen::Source(argmin_by_id(&scores)?),
        candidate_scores: scores,
        achieved_regret: None,
    })
}

/// One-vs-rest linear source classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceClassifier {
    pub classes: Vec<SourceId>,
    pub models: Vec<LinearDetector>,
}

pub fn train_source_classifier(
    representatives: &[(SourceId, &FeatureMatrix)],
    config: &DetectorConfig,
) -> Result<SourceClassifier> {
    if representatives.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: representatives.len() });
    }
    let mut reps: Vec<(SourceId, &FeatureMatrix)> = representatives.to_vec();
    reps.sort_by_key(|r| r.0);
    for w in reps.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateId(w[0].0.to_string()));
        }
    }
    for (id, f) in &reps {
        if f.n() < MIN_CLASS_SAMPLES {
            return Err(Error::ClassTooSmall { class: *id, got: f.n(), needed: MIN_CLASS_SAMPLES });
        }
        f.check_same_dim(reps[0].1)?;
    }
    let models = reps
        .par_iter()
        .enumerate()
        .map(|(i, (id, positives))| {
            let others: Vec<FeatureMatrix> =
                reps.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r.1.prefixed(&format!("{}:", r.0))).collect();
            let negatives = FeatureMatrix::concat(&others.iter().collect::<Vec<_>>())?;
            Ok(train_detector(&negatives, positives, config, *id)?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceClassifier { classes: reps.iter().map(|r| r.0).collect(), models })
}

impl SourceClassifier {
    /// Class with the largest one-vs-rest score among `allowed` (all classes
    /// when `None`), ties by smallest id.
    pub fn predict(&self, x: &[f32], allowed: Option<&[SourceId]>) -> Option<SourceId> {
        let mut best: Option<(SourceId, f64)> = None;
        for (id, m) in self.classes.iter().zip(&self.models) {
            if allowed.is_some_and(|a| !a.contains(id)) {
                continue;
            }
            let s = m.score(x);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*id, s));
            }
        }
        best.map(|b| b.0)
    }

    pub fn predict_all(&self, features: &FeatureMatrix, allowed: Option<&[SourceId]>) -> Result<Vec<SourceId>> {
        if let Some(m) = self.models.first() {
            if m.d() != features.d() {
                return Err(Error::DimensionMismatch { left: m.d(), right: features.d() });
            }
        }
        features.rows().map(|r| self.predict(r, allowed).ok_or(Error::EmptyCandidates)).collect()
    }

    pub fn accuracy(&self, features: &FeatureMatrix, truth: SourceId) -> Result<f64> {
        let p = self.predict_all(features, None)?;
        Ok(p.iter().filter(|&&c| c == truth).count() as f64 / p.len().max(1) as f64)
    }
}

/// Per-image routing result: the routed source and the calibrated score
/// `s_r(x) − τ_r` of that source's detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    pub outcome: SelectionOutcome,
    pub scores: Vec<f64>,
}

pub fn route_per_image(
    model: &SourceClassifier,
    operational: &FeatureMatrix,
    detectors: &BTreeMap<SourceId, LinearDetector>,
    allowed: Option<&[SourceId]>,
) -> Result<Routing> {
    if operational.n() == 0 {
        return Err(Error::EmptySet("operational set"));
    }
    let assigned = model.predict_all(operational, allowed)?;
    let mut scores = Vec::with_capacity(assigned.len());
    for (row, id) in operational.rows().zip(&assigned) {
        let det = detectors.get(id).ok_or(Error::MissingDetector(*id))?;
        if det.d() != operational.d() {
            return Err(Error::DimensionMismatch { left: det.d(), right: operational.d() });
        }
        scores.push(det.score(row) - det.threshold);
    }
    Ok(Routing {
        outcome: SelectionOutcome {
            strategy: StrategyKind::MultiClassifier,
            chosen: Chosen::PerImage(assigned),
            candidate_scores: Vec::new(),
            achieved_regret: None,
        },
        scores,
    })
}

/// Modal element, ties by smallest id.
pub fn majority(predictions: &[SourceId]) -> Option<SourceId> {
    let mut counts: BTreeMap<SourceId, usize> = BTreeMap::new();
    for p in predictions {
        *counts.entry(*p).or_default() += 1;
    }
    counts.into_iter().fold(None, |best: Option<(SourceId, usize)>, (id, c)| match best {
        Some((_, bc)) if bc >= c => best,
        _ => Some((id, c)),
    }).map(|b| b.0)
}

pub fn majority_vote(
    model: &SourceClassifier,
    operational: &FeatureMatrix,
    allowed: Option<&[SourceId]>,
) -> Result<SelectionOutcome> {
    if operational.n() == 0 {
        return Err(Error::EmptySet("operational set"));
    }
    let preds = model.predict_all(operational, allowed)?;
    let chosen = majority(&preds).ok_or(Error::EmptyCandidates)?;
    Ok(SelectionOutcome {
        strategy: StrategyKind::MajorityVote,
        chosen: Chosen::Source(chosen),
        candidate_scores: Vec::new(),
        achieved_regret: None,
    })
}
