//! Provenance check and self-consistency audit of an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::artifacts::{parse_csv_stamp, strip_csv_stamp, ArtifactIndex, Stamped, INDEX_FILE};
use super::config::{ExperimentConfig, Scenario};
use super::summary::{RegretSummary, SummaryRow};
use crate::error::{Error, Result};
use crate::select::StrategyKind;
use crate::stegodet::{decode_regret_binary, DetectorHeader, RegretMatrix};
use crate::{Provenance, SourceId};

/// Relative tolerance when comparing recomputed floats with persisted ones.
const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub completed_stages: Vec<String>,
    pub files_checked: usize,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Deserialize)]
struct StrategyRow {
    scenario: Scenario,
    strategy: StrategyKind,
    operational_size: usize,
    #[allow(dead_code)]
    target_id: SourceId,
    regret: f64,
}

fn read(root: &Path, rel: &str) -> Result<String> {
    let p = root.join(rel);
    std::fs::read_to_string(&p).map_err(|e| Error::io(p, e))
}

fn check(path: PathBuf, expected: &Provenance, found: Option<Provenance>) -> Result<()> {
    match found {
        Some(p) if p == *expected => Ok(()),
        Some(p) => Err(Error::HashMismatch { path, expected: expected.config_hash.clone(), found: p.config_hash }),
        None => Err(Error::HashMismatch { path, expected: expected.config_hash.clone(), found: "<missing>".into() }),
    }
}

fn json_provenance(text: &str) -> Option<Provenance> {
    if let Ok(s) = serde_json::from_str::<Stamped<serde_json::Value>>(text) {
        return Some(s.provenance);
    }
    serde_json::from_str::<DetectorHeader>(text).ok().and_then(|h| h.provenance)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= AUDIT_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Verifies every indexed artifact carries `config`'s hash and that the
/// summaries agree with the per-target records they were built from.
pub fn audit(root: impl AsRef<Path>, config: &ExperimentConfig) -> Result<Report> {
    let root = root.as_ref();
    let expected = config.provenance();
    let index: ArtifactIndex = serde_json::from_str(&read(root, INDEX_FILE)?)?;
    check(root.join(INDEX_FILE), &expected, Some(index.provenance.clone()))?;
    if let Some(stage) = &index.failed_stage {
        return Err(Error::Audit(format!("run stopped at stage {stage}")));
    }

    for rel in &index.files {
        let path = root.join(rel);
        if rel.ends_with(".json") {
            check(path, &expected, json_provenance(&read(root, rel)?))?;
        } else if rel.ends_with(".csv") {
            check(path, &expected, parse_csv_stamp(&read(root, rel)?))?;
        } else {
            // binary payloads are covered by a stamped sidecar
            let sidecar = match rel.strip_suffix(".weights") {
                Some(stem) => format!("{stem}.json"),
                None => format!("{rel}.json"),
            };
            if !index.files.contains(&sidecar) {
                return Err(Error::Audit(format!("{rel} has no provenance sidecar")));
            }
            if !path.exists() {
                return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
            }
        }
    }

    if index.files.iter().any(|f| f == "matrices/regret.csv") {
        let m = RegretMatrix::from_csv(strip_csv_stamp(&read(root, "matrices/regret.csv")?).as_bytes())?;
        let p = root.join("matrices/regret.bin");
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let (ids, regrets) = decode_regret_binary(&bytes)?;
        if ids != m.ids() || regrets.iter().zip(m.records()).any(|(a, r)| !close(*a, r.regret)) {
            return Err(Error::Audit("regret.csv and regret.bin disagree".into()));
        }
        if (0..m.len()).any(|i| m.at(i, i).regret != 0.0) {
            return Err(Error::Audit("nonzero regret on the diagonal".into()));
        }
    }

    let mut summary = Vec::new();
    if index.files.iter().any(|f| f == "reports/summary.csv") {
        let text = read(root, "reports/strategy_regrets.csv")?;
        let mut rd = csv::Reader::from_reader(strip_csv_stamp(&text).as_bytes());
        let mut groups: BTreeMap<(Scenario, StrategyKind, usize), Vec<f64>> = BTreeMap::new();
        for row in rd.deserialize::<StrategyRow>() {
            let row = row?;
            groups.entry((row.scenario, row.strategy, row.operational_size)).or_default().push(row.regret);
        }
        let text = read(root, "reports/summary.csv")?;
        let mut rd = csv::Reader::from_reader(strip_csv_stamp(&text).as_bytes());
        for row in rd.deserialize::<SummaryRow>() {
            let row = row?;
            let key = (row.scenario, row.strategy, row.operational_size);
            let raw = groups.get(&key).ok_or_else(|| Error::Audit(format!("summary row {key:?} has no records")))?;
            let again = RegretSummary::from_regrets(raw)?;
            let (a, b) = (&again, &row.summary);
            let same = a.count == b.count
                && [(a.min, b.min), (a.q1, b.q1), (a.q2, b.q2), (a.q3, b.q3), (a.max, b.max), (a.pct_over_5, b.pct_over_5)]
                    .iter()
                    .all(|(x, y)| close(*x, *y));
            if !same {
                return Err(Error::Audit(format!("summary row {key:?} does not match its records")));
            }
            summary.push(row);
        }
    }

    Ok(Report { provenance: expected, completed_stages: index.completed_stages, files_checked: index.files.len(), summary })
}
