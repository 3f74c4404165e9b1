//! End-to-end universe experiment.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::Artifacts;
use super::config::{ExperimentConfig, Scenario};
use super::curves::{quantile_curves, QuantileCurve};
use super::data::{develop_source, SourceData};
use super::summary::{summary_csv, RegretSummary, SummaryRow};
use crate::devsim::{build_universe, SourceManifest};
use crate::error::{Error, Result};
use crate::features::{encode_matrix, FeatureMatrix};
use crate::metrics::{energy_from_means, l2_between_means, MetricKind};
use crate::select::{self, AdmissiblePairs, PairValue, SourceClassifier, StrategyKind};
use crate::stegodet::{self, evaluate_scores, EvalSet, LinearDetector, RegretMatrix};
use crate::subspace::{nscd, pca_subspace, Subspace};
use crate::{seeds, stats, SourceId};

/// Row-major S×T tables of the three metrics for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub ids: Vec<SourceId>,
    pub l2_cg: Vec<f64>,
    pub energy_mmd: Vec<f64>,
    pub nscd: Vec<f64>,
}

impl MetricTable {
    pub fn values(&self, kind: MetricKind) -> &[f64] {
        match kind {
            MetricKind::L2Cg => &self.l2_cg,
            MetricKind::EnergyMmd => &self.energy_mmd,
            MetricKind::Nscd => &self.nscd,
        }
    }

    pub fn at(&self, kind: MetricKind, s: usize, t: usize) -> f64 {
        self.values(kind)[s * self.ids.len() + t]
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let n = self.ids.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["source_id", "target_id", "l2_cg", "energy_mmd", "nscd"])?;
        for k in 0..n * n {
            w.write_record([
                self.ids[k / n].to_string(),
                self.ids[k % n].to_string(),
                self.l2_cg[k].to_string(),
                self.energy_mmd[k].to_string(),
                self.nscd[k].to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
    }
}

/// The regret obtained by one strategy for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub scenario: Scenario,
    pub strategy: StrategyKind,
    pub operational_size: usize,
    pub target_id: SourceId,
    /// `None` for per-image routing.
    pub chosen: Option<SourceId>,
    pub regret: f64,
}

/// Everything held in memory after the universe stages.
pub struct Universe {
    pub config: ExperimentConfig,
    pub sources: Vec<SourceData>,
    pub detectors: BTreeMap<SourceId, LinearDetector>,
    pub eval_sets: BTreeMap<SourceId, EvalSet>,
    pub source_subspaces: Vec<Subspace>,
    pub regret: RegretMatrix,
}

impl Universe {
    pub fn ids(&self) -> Vec<SourceId> {
        self.sources.iter().map(|s| s.manifest.source_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub regret: RegretMatrix,
    pub metrics: BTreeMap<Scenario, MetricTable>,
    pub admissible: BTreeMap<Scenario, AdmissiblePairs>,
    pub representatives: Vec<SourceId>,
    pub records: Vec<StrategyRecord>,
    pub summary: Vec<SummaryRow>,
    pub sample_sweep: Vec<SummaryRow>,
    pub curves: Vec<(Scenario, MetricKind, QuantileCurve)>,
    /// Training-set top-1 accuracy of the source classifier per representative.
    pub classifier_train_accuracy: Vec<(SourceId, f64)>,
    pub anneal: Option<Vec<super::campaign::AnnealOutcome>>,
}

fn stage<T>(artifacts: &mut Artifacts, name: &'static str, f: impl FnOnce(&mut Artifacts) -> Result<T>) -> Result<T> {
    match f(artifacts) {
        Ok(v) => {
            artifacts.stage_done(name)?;
            Ok(v)
        }
        Err(e) => {
            let _ = artifacts.write_index(Some(name));
            Err(e.at_stage(name))
        }
    }
}

/// Builds manifests, develops every source and trains the detectors and
/// the regret matrix.
pub fn build(config: &ExperimentConfig, artifacts: &mut Artifacts, persist_features: bool) -> Result<Universe> {
    let manifests: Vec<SourceManifest> = stage(artifacts, "manifests", |a| {
        let n = config.n_train + config.n_eval + config.n_operational;
        let m = build_universe(&config.grid, n, config.seed)?;
        for man in &m {
            a.json(&format!("manifests/source_{:04}.json", man.source_id.0), man)?;
        }
        Ok(m)
    })?;

    let sources: Vec<SourceData> = stage(artifacts, "features", |a| {
        let mut out = Vec::with_capacity(manifests.len());
        for m in &manifests {
            let s = develop_source(config, m)?;
            if persist_features {
                for (part, feats) in [("train", &s.train), ("eval", &s.eval), ("op", &s.operational)] {
                    for (kind, fm) in [("c", &feats.covers), ("s", &feats.stegos)] {
                        let rel = format!("features/source_{:04}_{part}_{kind}.sgfm", m.source_id.0);
                        a.binary(&rel, &encode_matrix(fm))?;
                    }
                }
            }
            out.push(s);
        }
        if persist_features {
            a.json("features/provenance.json", &serde_json::json!({ "dctr": config.dctr() }))?;
        }
        Ok(out)
    })?;

    let detectors = stage(artifacts, "detectors", |a| {
        let trained = sources
            .iter()
            .map(|s| {
                stegodet::train_detector(&s.train.covers, &s.train.stegos, &config.detector, s.manifest.source_id)
                    .map(|(d, _)| d)
            })
            .collect::<Result<Vec<_>>>()?;
        let prov = a.provenance().clone();
        let mut map = BTreeMap::new();
        for d in trained {
            let stem = format!("detectors/source_{:04}", d.trained_on.0);
            a.external(&format!("{stem}.json"));
            a.external(&format!("{stem}.weights"));
            stegodet::write_detector(&d, a.root().join(&stem), Some(&prov))?;
            map.insert(d.trained_on, d);
        }
        Ok(map)
    })?;

    let eval_sets: BTreeMap<SourceId, EvalSet> =
        sources.iter().map(|s| Ok((s.manifest.source_id, s.eval_set()?))).collect::<Result<_>>()?;

    let regret = stage(artifacts, "regret", |a| {
        let m = stegodet::regret_matrix(&detectors, &eval_sets)?;
        a.csv("matrices/regret.csv", &m.to_csv()?)?;
        a.binary("matrices/regret.bin", &m.to_binary())?;
        Ok(m)
    })?;

    let source_subspaces = stage(artifacts, "subspaces", |_| {
        sources.iter().map(|s| pca_subspace(&s.train.both()?, config.variance_threshold)).collect::<Result<Vec<_>>>()
    })?;

    Ok(Universe { config: config.clone(), sources, detectors, eval_sets, source_subspaces, regret })
}

struct Centered {
    x: DMatrix<f64>,
    norms: Vec<f64>,
}

fn centered(f: &FeatureMatrix, center: &[f64]) -> Centered {
    let mut x = f.to_dmatrix();
    for (j, c) in center.iter().enumerate() {
        x.column_mut(j).add_scalar_mut(-c);
    }
    let norms = x.row_iter().map(|r| r.norm_squared()).collect();
    Centered { x, norms }
}

fn distances(a: &Centered, b: &Centered) -> DMatrix<f64> {
    let mut g = &a.x * b.x.transpose();
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let sq = a.norms[i] + b.norms[j] - 2.0 * g[(i, j)];
            g[(i, j)] = sq.max(0.0).sqrt();
        }
    }
    g
}

fn block_mean(d: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let mut col_sums = Vec::with_capacity(cols.len());
    for &j in cols {
        let c = d.column(j);
        col_sums.push(stats::pairwise_sum(&rows.iter().map(|&i| c[i]).collect::<Vec<_>>()));
    }
    stats::pairwise_sum(&col_sums) / (rows.len() * cols.len()) as f64
}

/// Rows of the stacked (covers, stegos) operational matrix used by a scenario.
pub fn scenario_rows(scenario: Scenario, n: usize) -> Vec<usize> {
    match scenario {
        Scenario::CoversOnly => (0..n).collect(),
        Scenario::StegosOnly => (n..2 * n).collect(),
        Scenario::Mixed5050 => (0..n / 2).chain(n + n / 2..2 * n).collect(),
    }
}

/// Seed-determined subsample of `size` rows among a scenario's rows.
pub fn subsample_rows(rows: &[usize], size: usize, seed: u64, target: SourceId, scenario: Scenario) -> Vec<usize> {
    if size >= rows.len() {
        return rows.to_vec();
    }
    use rand::seq::SliceRandom;
    let mut rng = seeds::rng_for(seed, &[seeds::tag::SUBSAMPLE, target.0 as u64, scenario as u64, size as u64]);
    let mut v = rows.to_vec();
    v.shuffle(&mut rng);
    v.truncate(size);
    v.sort_unstable();
    v
}

/// Metric tables for every configured scenario.
pub fn metric_tables(u: &Universe) -> Result<BTreeMap<Scenario, MetricTable>> {
    let n = u.sources.len();
    let ids = u.ids();
    let train: Vec<FeatureMatrix> = u.sources.iter().map(|s| s.train.both()).collect::<Result<_>>()?;
    let ops: Vec<FeatureMatrix> = u.sources.iter().map(|s| s.operational.both()).collect::<Result<_>>()?;
    let n_op = u.config.n_operational;

    let d = train[0].d();
    let mut center = vec![0.0; d];
    for m in &train {
        for (c, v) in center.iter_mut().zip(m.mean()) {
            *c += v / n as f64;
        }
    }
    let train_c: Vec<Centered> = train.par_iter().map(|m| centered(m, &center)).collect();
    let within_src: Vec<f64> = train_c
        .par_iter()
        .map(|c| {
            let all: Vec<usize> = (0..c.x.nrows()).collect();
            block_mean(&distances(c, c), &all, &all)
        })
        .collect();
    let train_means: Vec<Vec<f64>> = train.iter().map(|m| m.mean()).collect();

    let scenarios = &u.config.scenarios;
    // per target: (within-target mean per scenario, cross mean per (source, scenario), subspace and mean per scenario)
    struct TargetStats {
        cross: Vec<Vec<f64>>,
        within: Vec<f64>,
        subspaces: Vec<Subspace>,
        means: Vec<Vec<f64>>,
    }
    let per_target: Vec<TargetStats> = (0..n)
        .map(|t| {
            let oc = centered(&ops[t], &center);
            let dtt = distances(&oc, &oc);
            let rows: Vec<Vec<usize>> = scenarios.iter().map(|&s| scenario_rows(s, n_op)).collect();
            let within = rows.iter().map(|r| block_mean(&dtt, r, r)).collect();
            let cross = train_c
                .par_iter()
                .map(|sc| {
                    let dst = distances(sc, &oc);
                    let all: Vec<usize> = (0..sc.x.nrows()).collect();
                    rows.iter().map(|r| block_mean(&dst, &all, r)).collect()
                })
                .collect();
            let sets: Vec<FeatureMatrix> = rows.iter().map(|r| ops[t].select(r)).collect::<Result<_>>()?;
            let subspaces =
                sets.par_iter().map(|m| pca_subspace(m, u.config.variance_threshold)).collect::<Result<Vec<_>>>()?;
            let means = sets.iter().map(|m| m.mean()).collect();
            Ok(TargetStats { cross, within, subspaces, means })
        })
        .collect::<Result<_>>()?;

    let mut out = BTreeMap::new();
    for (k, &scenario) in scenarios.iter().enumerate() {
        let cells: Vec<(f64, f64, f64)> = (0..n * n)
            .into_par_iter()
            .map(|c| {
                let (s, t) = (c / n, c % n);
                let ts = &per_target[t];
                let l2 = l2_between_means(&train_means[s], &ts.means[k]);
                let mmd = energy_from_means(ts.cross[s][k], within_src[s], ts.within[k]);
                let ns = nscd(&u.source_subspaces[s], &ts.subspaces[k])?;
                Ok((l2, mmd, ns))
            })
            .collect::<Result<_>>()?;
        out.insert(
            scenario,
            MetricTable {
                ids: ids.clone(),
                l2_cg: cells.iter().map(|c| c.0).collect(),
                energy_mmd: cells.iter().map(|c| c.1).collect(),
                nscd: cells.iter().map(|c| c.2).collect(),
            },
        );
    }
    Ok(out)
}

/// Close-pair filter on off-diagonal MMD values; a target is never its own candidate.
pub fn admissible_pairs(table: &MetricTable, decile: f64) -> Result<AdmissiblePairs> {
    let n = table.ids.len();
    let values: Vec<PairValue> = (0..n * n)
        .filter(|k| k / n != k % n)
        .map(|k| PairValue { source_id: table.ids[k / n], target_id: table.ids[k % n], value: table.energy_mmd[k] })
        .collect();
    select::filter_close_pairs(&values, decile)
}

fn allowed_classes(reps: &[SourceId], adm: &AdmissiblePairs, target: SourceId) -> Vec<SourceId> {
    let v: Vec<SourceId> = reps.iter().copied().filter(|&r| adm.is_admissible(r, target)).collect();
    if v.is_empty() {
        reps.to_vec()
    } else {
        v
    }
}

/// Runs the whole protocol and writes every artifact under `out_dir`.
pub fn run_universe_experiment(config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<ExperimentOutput> {
    run_with_options(config, out_dir, true)
}

pub fn run_with_options(config: &ExperimentConfig, out_dir: impl AsRef<Path>, persist_features: bool) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut artifacts = Artifacts::create(out_dir.as_ref(), config.provenance())?;
    artifacts.json("reports/config.json", config)?;
    let u = build(config, &mut artifacts, persist_features)?;
    analyze(&u, &mut artifacts)
}

pub fn analyze(u: &Universe, artifacts: &mut Artifacts) -> Result<ExperimentOutput> {
    let config = &u.config;
    let ids = u.ids();
    let n = ids.len();

    let metrics = stage(artifacts, "metrics", |a| {
        let m = metric_tables(u)?;
        for (s, table) in &m {
            a.csv(&format!("matrices/metrics_{s}.csv"), &table.to_csv()?)?;
        }
        Ok(m)
    })?;

    let admissible: BTreeMap<Scenario, AdmissiblePairs> = stage(artifacts, "filter", |a| {
        let mut out = BTreeMap::new();
        for (s, table) in &metrics {
            let adm = admissible_pairs(table, config.decile)?;
            a.json(&format!("reports/admissible_{s}.json"), &adm)?;
            out.insert(*s, adm);
        }
        Ok(out)
    })?;

    let representatives = stage(artifacts, "representatives", |a| {
        let r = select::extract_representatives(&u.regret, config.regret_threshold)?;
        a.json("reports/representatives.json", &r)?;
        Ok(r)
    })?;

    let (classifier, classifier_train_accuracy) = stage(artifacts, "classifier", |a| {
        let reps: Vec<(SourceId, FeatureMatrix)> = representatives
            .iter()
            .map(|id| Ok((*id, u.sources[u.regret.index_of(*id).expect("known id")].train.both()?)))
            .collect::<Result<_>>()?;
        if reps.len() < 2 {
            return Ok((None, Vec::new()));
        }
        let refs: Vec<(SourceId, &FeatureMatrix)> = reps.iter().map(|(i, f)| (*i, f)).collect();
        let clf = select::train_source_classifier(&refs, &config.detector)?;
        let acc = reps.iter().map(|(i, f)| Ok((*i, clf.accuracy(f, *i)?))).collect::<Result<Vec<_>>>()?;
        a.json("reports/classifier.json", &serde_json::json!({ "classes": clf.classes, "train_accuracy": acc }))?;
        Ok((Some(clf), acc))
    })?;

    let records = stage(artifacts, "selection", |a| {
        let recs = strategy_records(u, &metrics, &admissible, &representatives, classifier.as_ref())?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scenario", "strategy", "operational_size", "target_id", "chosen", "regret"])?;
        for r in &recs {
            w.write_record([
                r.scenario.as_str().to_string(),
                r.strategy.as_str().to_string(),
                r.operational_size.to_string(),
                r.target_id.to_string(),
                r.chosen.map(|c| c.to_string()).unwrap_or_default(),
                r.regret.to_string(),
            ])?;
        }
        let body = w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })?;
        a.csv("reports/strategy_regrets.csv", &body)?;
        Ok(recs)
    })?;

    let summary = stage(artifacts, "summary", |a| {
        let rows = summarize(&records, config.n_operational)?;
        a.csv("reports/summary.csv", &summary_csv(&rows)?)?;
        Ok(rows)
    })?;

    let curves = stage(artifacts, "curves", |a| {
        let mut out = Vec::new();
        for (s, table) in &metrics {
            let adm = &admissible[s];
            let pairs: Vec<(usize, usize)> = (0..n * n)
                .map(|k| (k / n, k % n))
                .filter(|&(si, ti)| si != ti && adm.is_admissible(ids[si], ids[ti]))
                .collect();
            let regrets: Vec<f64> = pairs.iter().map(|&(si, ti)| u.regret.at(si, ti).regret.max(0.0)).collect();
            for kind in MetricKind::ALL {
                let raw: Vec<f64> = pairs.iter().map(|&(si, ti)| table.at(kind, si, ti)).collect();
                let max = raw.iter().copied().fold(0.0f64, f64::max);
                if !(max > 0.0) {
                    return Err(Error::DegenerateUniverse);
                }
                let norm: Vec<f64> = raw.iter().map(|v| v / max).collect();
                let c = quantile_curves(&norm, &regrets, config.window)?;
                a.csv(&format!("curves/{s}_{}.csv", kind.as_str().to_lowercase()), &c.to_csv()?)?;
                out.push((*s, kind, c));
            }
        }
        Ok(out)
    })?;

    let sample_sweep = stage(artifacts, "sample_sizes", |a| {
        let rows = sample_size_sweep(u, &admissible, &config.sample_sizes)?;
        a.csv("reports/sample_sizes.csv", &summary_csv(&rows)?)?;
        Ok(rows)
    })?;

    let anneal = match &config.anneal {
        Some(c) => Some(stage(artifacts, "anneal", |a| super::campaign::run_campaign(u, c, a))?),
        None => None,
    };

    Ok(ExperimentOutput {
        regret: u.regret.clone(),
        metrics,
        admissible,
        representatives,
        records,
        summary,
        sample_sweep,
        curves,
        classifier_train_accuracy,
        anneal,
    })
}

fn strategy_records(
    u: &Universe,
    metrics: &BTreeMap<Scenario, MetricTable>,
    admissible: &BTreeMap<Scenario, AdmissiblePairs>,
    reps: &[SourceId],
    classifier: Option<&SourceClassifier>,
) -> Result<Vec<StrategyRecord>> {
    let ids = u.ids();
    let n_op = u.config.n_operational;
    // routing uses the labeled target evaluation images; only the allowed set depends on the scenario
    let routed: Vec<BTreeMap<Scenario, f64>> = ids
        .par_iter()
        .map(|&t| {
            let mut out = BTreeMap::new();
            let Some(clf) = classifier else { return Ok(out) };
            let ev = &u.eval_sets[&t];
            let intrinsic = u.regret.get(t, t).expect("diagonal").intrinsic_pe;
            for (scenario, adm) in admissible {
                let allowed = allowed_classes(reps, adm, t);
                let rc = select::route_per_image(clf, &ev.covers, &u.detectors, Some(&allowed))?;
                let rs = select::route_per_image(clf, &ev.stegos, &u.detectors, Some(&allowed))?;
                out.insert(*scenario, evaluate_scores(&rc.scores, &rs.scores)?.p_e - intrinsic);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (scenario, table) in metrics {
        let adm = &admissible[scenario];
        for (ti, &t) in ids.iter().enumerate() {
            let ops = u.sources[ti].operational.both()?.select(&scenario_rows(*scenario, n_op))?;
            if let Some(clf) = classifier {
                let allowed = allowed_classes(reps, adm, t);
                let mv = select::majority_vote(clf, &ops, Some(&allowed))?.single().expect("single source");
                out.push(StrategyRecord {
                    scenario: *scenario,
                    strategy: StrategyKind::MajorityVote,
                    operational_size: n_op,
                    target_id: t,
                    chosen: Some(mv),
                    regret: u.regret.get(mv, t).expect("known").regret,
                });
                out.push(StrategyRecord {
                    scenario: *scenario,
                    strategy: StrategyKind::MultiClassifier,
                    operational_size: n_op,
                    target_id: t,
                    chosen: None,
                    regret: routed[ti][scenario],
                });
            }
            for kind in MetricKind::ALL {
                let cands = adm.candidates(t);
                let scores: Vec<(SourceId, f64)> =
                    cands.iter().map(|&s| (s, table.at(kind, u.regret.index_of(s).expect("known"), ti))).collect();
                let chosen = select::argmin_by_id(&scores)?;
                out.push(StrategyRecord {
                    scenario: *scenario,
                    strategy: StrategyKind::for_metric(kind),
                    operational_size: n_op,
                    target_id: t,
                    chosen: Some(chosen),
                    regret: u.regret.get(chosen, t).expect("known").regret,
                });
            }
        }
    }
    Ok(out)
}

fn summarize(records: &[StrategyRecord], size: usize) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(Scenario, StrategyKind), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.operational_size == size) {
        groups.entry((r.scenario, r.strategy)).or_default().push(r.regret);
    }
    groups
        .into_iter()
        .map(|((scenario, strategy), v)| {
            Ok(SummaryRow { scenario, strategy, operational_size: size, summary: RegretSummary::from_regrets(&v)? })
        })
        .collect()
}

/// Min-NSCD selection with operational sets subsampled to each size.
pub fn sample_size_sweep(
    u: &Universe,
    admissible: &BTreeMap<Scenario, AdmissiblePairs>,
    sizes: &[usize],
) -> Result<Vec<SummaryRow>> {
    let ids = u.ids();
    let n_op = u.config.n_operational;
    let mut rows = Vec::new();
    for &size in sizes {
        if size > n_op {
            return Err(Error::InvalidParameter(format!("sample size {size} exceeds the operational pool {n_op}")));
        }
        for (scenario, adm) in admissible {
            let regrets: Vec<f64> = ids
                .par_iter()
                .enumerate()
                .map(|(ti, &t)| {
                    let pool = scenario_rows(*scenario, n_op);
                    let chosen_rows = subsample_rows(&pool, size, u.config.seed, t, *scenario);
                    let ops = u.sources[ti].operational.both()?.select(&chosen_rows)?;
                    let target = pca_subspace(&ops, u.config.variance_threshold)?;
                    let scores: Vec<(SourceId, f64)> = adm
                        .candidates(t)
                        .iter()
                        .map(|&s| Ok((s, nscd(&u.source_subspaces[u.regret.index_of(s).expect("known")], &target)?)))
                        .collect::<Result<_>>()?;
                    let chosen = select::argmin_by_id(&scores)?;
                    Ok(u.regret.get(chosen, t).expect("known").regret)
                })
                .collect::<Result<_>>()?;
            rows.push(SummaryRow {
                scenario: *scenario,
                strategy: StrategyKind::MinNscd,
                operational_size: size,
                summary: RegretSummary::from_regrets(&regrets)?,
            });
        }
    }
    Ok(rows)
}
