//! Probability of error under equal priors.

use serde::{Deserialize, Serialize};

use super::detector::LinearDetector;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
}

/// Best threshold of a sweep and its error rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
}

/// Minimizes (P_FA + P_MD)/2 over −∞, +∞ and all midpoints between
/// consecutive distinct scores; "stego" means score > threshold. The
/// smallest minimizing threshold is returned.
pub fn sweep(cover_scores: &[f64], stego_scores: &[f64]) -> Result<Sweep> {
    if cover_scores.is_empty() {
        return Err(Error::EmptySet("cover scores"));
    }
    if stego_scores.is_empty() {
        return Err(Error::EmptySet("stego scores"));
    }
    if cover_scores.iter().chain(stego_scores).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("detector scores"));
    }
    let (nc, ns) = (cover_scores.len() as f64, stego_scores.len() as f64);
    let mut all: Vec<(f64, bool)> =
        cover_scores.iter().map(|&s| (s, false)).chain(stego_scores.iter().map(|&s| (s, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // threshold −∞: everything flagged stego
    let (mut covers_below, mut stegos_below) = (0usize, 0usize);
    let mut best = Sweep { threshold: f64::NEG_INFINITY, p_fa: 1.0, p_md: 0.0, p_e: 0.5 };
    let mut i = 0;
    while i < all.len() {
        let v = all[i].0;
        while i < all.len() && all[i].0 == v {
            if all[i].1 { stegos_below += 1 } else { covers_below += 1 }
            i += 1;
        }
        let threshold = if i < all.len() { 0.5 * (v + all[i].0) } else { f64::INFINITY };
        let p_fa = 1.0 - covers_below as f64 / nc;
        let p_md = stegos_below as f64 / ns;
        let p_e = 0.5 * (p_fa + p_md);
        if p_e < best.p_e {
            best = Sweep { threshold, p_fa, p_md, p_e };
        }
    }
    Ok(best)
}

pub fn evaluate(detector: &LinearDetector, covers: &FeatureMatrix, stegos: &FeatureMatrix) -> Result<EvalReport> {
    evaluate_scores(&detector.scores(covers)?, &detector.scores(stegos)?)
}

pub fn evaluate_scores(cover_scores: &[f64], stego_scores: &[f64]) -> Result<EvalReport> {
    let s = sweep(cover_scores, stego_scores)?;
    Ok(EvalReport { p_fa: s.p_fa, p_md: s.p_md, p_e: s.p_e })
}
