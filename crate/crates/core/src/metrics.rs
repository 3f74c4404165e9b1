//! Distribution-level discrepancies between a source and a target feature set.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::stats::pairwise_sum;
use crate::subspace::{self, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricKind {
    L2Cg,
    EnergyMmd,
    Nscd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::L2Cg, MetricKind::EnergyMmd, MetricKind::Nscd];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::L2Cg => "L2_CG",
            MetricKind::EnergyMmd => "ENERGY_MMD",
            MetricKind::Nscd => "NSCD",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    /// Set by [`normalize_over_universe`].
    pub normalized: Option<f64>,
}

impl MetricValue {
    pub fn new(kind: MetricKind, value: f64) -> Self {
        Self { kind, value, normalized: None }
    }
}

fn check_pair(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<()> {
    source.check_same_dim(target)
}

/// Euclidean distance between the column means.
pub fn l2_cg(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<MetricValue> {
    check_pair(source, target)?;
    Ok(MetricValue::new(MetricKind::L2Cg, l2_between_means(&source.mean(), &target.mean())))
}

pub fn l2_between_means(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// NSCD between two already-estimated subspaces, as a metric value.
pub fn nscd_value(source: &Subspace, target: &Subspace) -> Result<MetricValue> {
    Ok(MetricValue::new(MetricKind::Nscd, subspace::nscd(source, target)?))
}

const BLOCK_ROWS: usize = 512;

/// Rows of `m` minus `center`, as an f64 matrix, and their squared norms.
fn centered_block(m: &FeatureMatrix, rows: std::ops::Range<usize>, center: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let d = m.d();
    let block = DMatrix::from_fn(rows.len(), d, |i, j| m.row(rows.start + i)[j] as f64 - center[j]);
    let norms = block.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    (block, norms)
}

/// All pairwise Euclidean distances between rows of `a` and rows of `b`,
/// computed as `sqrt(|x|² + |y|² − 2·x·y)` after subtracting the common
/// `center` (which only affects rounding).
pub fn pairwise_distances(a: &FeatureMatrix, b: &FeatureMatrix, center: &[f64]) -> Result<DMatrix<f64>> {
    check_pair(a, b)?;
    let (xa, na) = centered_block(a, 0..a.n(), center);
    let (xb, nb) = centered_block(b, 0..b.n(), center);
    let mut g = &xa * xb.transpose();
    for j in 0..b.n() {
        for i in 0..a.n() {
            let sq = na[i] + nb[j] - 2.0 * g[(i, j)];
            g[(i, j)] = sq.max(0.0).sqrt();
        }
    }
    Ok(g)
}

/// Sum of all pairwise distances between rows of `a` and `b`, computed in
/// fixed row blocks; the per-block partial sums are combined by a pairwise
/// tree so the result does not depend on the thread count.
pub fn sum_pairwise_distances(a: &FeatureMatrix, b: &FeatureMatrix, center: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let blocks_a: Vec<_> = (0..a.n()).step_by(BLOCK_ROWS).map(|s| s..(s + BLOCK_ROWS).min(a.n())).collect();
    let blocks_b: Vec<_> = (0..b.n()).step_by(BLOCK_ROWS).map(|s| s..(s + BLOCK_ROWS).min(b.n())).collect();
    let tasks: Vec<_> = blocks_a.iter().flat_map(|ra| blocks_b.iter().map(move |rb| (ra.clone(), rb.clone()))).collect();
    let partial: Vec<f64> = tasks
        .into_par_iter()
        .map(|(ra, rb)| {
            let (xa, na) = centered_block(a, ra, center);
            let (xb, nb) = centered_block(b, rb, center);
            let g = &xa * xb.transpose();
            let mut cols = Vec::with_capacity(g.ncols());
            for j in 0..g.ncols() {
                let col: Vec<f64> =
                    (0..g.nrows()).map(|i| (na[i] + nb[j] - 2.0 * g[(i, j)]).max(0.0).sqrt()).collect();
                cols.push(pairwise_sum(&col));
            }
            pairwise_sum(&cols)
        })
        .collect();
    Ok(pairwise_sum(&partial))
}

/// V-statistic of the squared MMD under the energy kernel `k(x,y) = −‖x−y‖`:
///
/// `E = 2/(nm)·ΣΣ‖xᵢ−yⱼ‖ − 1/n²·ΣΣ‖xᵢ−xᵢ'‖ − 1/m²·ΣΣ‖yⱼ−yⱼ'‖`, clamped at 0.
pub fn energy_mmd(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<MetricValue> {
    check_pair(source, target)?;
    let center: Vec<f64> = source.mean().iter().zip(target.mean()).map(|(a, b)| 0.5 * (a + b)).collect();
    let (n, m) = (source.n() as f64, target.n() as f64);
    let cross = sum_pairwise_distances(source, target, &center)? / (n * m);
    let within_s = sum_pairwise_distances(source, source, &center)? / (n * n);
    let within_t = sum_pairwise_distances(target, target, &center)? / (m * m);
    Ok(MetricValue::new(MetricKind::EnergyMmd, energy_from_means(cross, within_s, within_t)))
}

/// Combines mean cross and within-set distances into the energy statistic.
pub fn energy_from_means(cross_mean: f64, within_a_mean: f64, within_b_mean: f64) -> f64 {
    (2.0 * cross_mean - within_a_mean - within_b_mean).max(0.0)
}

/// Divides every value by the universe maximum.
pub fn normalize_over_universe(values: &[MetricValue]) -> Result<Vec<MetricValue>> {
    let first = values.first().ok_or(Error::EmptySet("metric values"))?;
    if values.iter().any(|v| v.kind != first.kind) {
        return Err(Error::MixedKinds);
    }
    let max = values.iter().map(|v| v.value).fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateUniverse);
    }
    Ok(values.iter().map(|v| MetricValue { normalized: Some(v.value / max), ..*v }).collect())
}
