//! Cross-source regret and the universe regret matrix.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::LinearDetector;
use super::eval::evaluate_scores;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::SourceId;

/// Labeled, balanced evaluation set of one source.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub covers: FeatureMatrix,
    pub stegos: FeatureMatrix,
}

impl EvalSet {
    pub fn new(covers: FeatureMatrix, stegos: FeatureMatrix) -> Result<Self> {
        covers.check_same_dim(&stegos)?;
        Ok(Self { covers, stegos })
    }

    pub fn d(&self) -> usize {
        self.covers.d()
    }

    pub fn p_e(&self, det: &LinearDetector) -> Result<f64> {
        Ok(evaluate_scores(&det.scores(&self.covers)?, &det.scores(&self.stegos)?)?.p_e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub source_id: SourceId,
    pub target_id: SourceId,
    pub cross_pe: f64,
    pub intrinsic_pe: f64,
    /// `cross_pe − intrinsic_pe`, unclamped.
    pub regret: f64,
}

impl RegretRecord {
    pub fn new(source_id: SourceId, target_id: SourceId, cross_pe: f64, intrinsic_pe: f64) -> Self {
        Self { source_id, target_id, cross_pe, intrinsic_pe, regret: cross_pe - intrinsic_pe }
    }

    pub fn clamped(&self) -> f64 {
        self.regret.max(0.0)
    }
}

pub fn regret(source: &LinearDetector, target: &LinearDetector, target_eval: &EvalSet) -> Result<RegretRecord> {
    if source.d() != target.d() {
        return Err(Error::DimensionMismatch { left: source.d(), right: target.d() });
    }
    Ok(RegretRecord::new(source.trained_on, target.trained_on, target_eval.p_e(source)?, target_eval.p_e(target)?))
}

/// Row-major S×T matrix of regret records; rows are sources, columns targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretMatrix {
    ids: Vec<SourceId>,
    records: Vec<RegretRecord>,
}

impl RegretMatrix {
    pub fn from_records(ids: Vec<SourceId>, records: Vec<RegretRecord>) -> Result<Self> {
        let n = ids.len();
        if records.len() != n * n {
            return Err(Error::DimensionMismatch { left: n * n, right: records.len() });
        }
        for (k, r) in records.iter().enumerate() {
            if r.source_id != ids[k / n] || r.target_id != ids[k % n] {
                return Err(Error::Audit(format!("record {k} is out of row-major order")));
            }
            if !r.regret.is_finite() {
                return Err(Error::NonFinite("regret"));
            }
        }
        Ok(Self { ids, records })
    }

    pub fn ids(&self) -> &[SourceId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn records(&self) -> &[RegretRecord] {
        &self.records
    }

    pub fn index_of(&self, id: SourceId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn at(&self, source: usize, target: usize) -> &RegretRecord {
        &self.records[source * self.ids.len() + target]
    }

    pub fn get(&self, source: SourceId, target: SourceId) -> Option<&RegretRecord> {
        Some(self.at(self.index_of(source)?, self.index_of(target)?))
    }

    /// Largest |R[s,t] − R[t,s]|.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for s in 0..n {
            for t in s + 1..n {
                worst = worst.max((self.at(s, t).regret - self.at(t, s).regret).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(bytes);
        let records: Vec<RegretRecord> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
        let n = (records.len() as f64).sqrt().round() as usize;
        let ids = records.iter().take(n).map(|r| r.target_id).collect();
        Self::from_records(ids, records)
    }

    /// `"SGRM" | version u32 | n u64 | n × u32 ids | n² × f64 raw regrets`, little-endian.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SGRM");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&id.0.to_le_bytes());
        }
        for r in &self.records {
            out.extend_from_slice(&r.regret.to_le_bytes());
        }
        out
    }

    pub fn write(&self, csv_path: &Path, bin_path: &Path) -> Result<()> {
        crate::features::io::write_atomic(csv_path, &self.to_csv()?)?;
        crate::features::io::write_atomic(bin_path, &self.to_binary())
    }
}

/// Decodes the square binary export into `(ids, row-major regrets)`.
pub fn decode_regret_binary(buf: &[u8]) -> Result<(Vec<SourceId>, Vec<f64>)> {
    if buf.len() < 4 || &buf[..4] != b"SGRM" {
        return Err(Error::BadMagic);
    }
    if buf.len() < 16 {
        return Err(Error::Truncated("regret header"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != 1 {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let need = n.checked_mul(n).and_then(|m| m.checked_mul(8)).and_then(|m| m.checked_add(16 + 4 * n));
    match need {
        Some(need) if buf.len() >= need => {}
        _ => return Err(Error::Truncated("regret body")),
    }
    let ids = (0..n).map(|i| SourceId(u32::from_le_bytes(buf[16 + 4 * i..20 + 4 * i].try_into().unwrap()))).collect();
    let body = &buf[16 + 4 * n..];
    let vals = (0..n * n).map(|k| f64::from_le_bytes(body[8 * k..8 * k + 8].try_into().unwrap())).collect();
    Ok((ids, vals))
}

pub fn regret_matrix(
    detectors: &BTreeMap<SourceId, LinearDetector>,
    eval_sets: &BTreeMap<SourceId, EvalSet>,
) -> Result<RegretMatrix> {
    let ids: Vec<SourceId> = detectors.keys().chain(eval_sets.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if ids.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: ids.len() });
    }
    for id in &ids {
        if !detectors.contains_key(id) {
            return Err(Error::MissingDetector(*id));
        }
        if !eval_sets.contains_key(id) {
            return Err(Error::MissingEvalSet(*id));
        }
    }
    let n = ids.len();
    let pe: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| eval_sets[&ids[k % n]].p_e(&detectors[&ids[k / n]]))
        .collect::<Result<_>>()?;
    let records = (0..n * n)
        .map(|k| {
            let (s, t) = (k / n, k % n);
            RegretRecord::new(ids[s], ids[t], pe[k], pe[t * n + t])
        })
        .collect();
    RegretMatrix::from_records(ids, records)
}
