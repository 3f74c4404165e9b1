//! Payload-constrained ternary embedding simulation on quantized DCT coefficients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::devsim::CoefficientImage;
use crate::error::{Error, Result};
use crate::seeds;

pub const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// ρ = 1 for every AC coefficient.
    Uniform,
    /// ρ = q(mode) / (1 + Σ|quantized AC| of the block). Loosely modeled on
    /// UERD; not a reference implementation of it.
    BlockEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    /// Bits per nonzero AC coefficient, in (0, 1.5].
    pub payload: f64,
    pub cost_model: CostModel,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { payload: 0.5, cost_model: CostModel::BlockEnergy, seed: 0 }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.payload > 0.0 && self.payload <= 1.5) {
            return Err(Error::InvalidParameter(format!("payload must be in (0, 1.5], got {}", self.payload)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutcome {
    pub stego: CoefficientImage,
    pub lambda: f64,
    /// Σ H₃(βᵢ) in bits.
    pub entropy_bits: f64,
    pub target_bits: f64,
    pub changes: usize,
}

/// Ternary entropy in bits of the distribution (β, β, 1 − 2β).
pub fn ternary_entropy(beta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let rest = 1.0 - 2.0 * beta;
    let tail = if rest <= 0.0 { 0.0 } else { -rest * (-2.0 * beta).ln_1p() };
    (-2.0 * beta * beta.ln() + tail) / std::f64::consts::LN_2
}

/// Probability of each of the ±1 changes at inverse temperature `lambda`.
pub fn change_probability(lambda: f64, cost: f64) -> f64 {
    let e = (-lambda * cost).exp();
    e / (1.0 + 2.0 * e)
}

fn total_entropy(costs: &[f64], lambda: f64) -> f64 {
    crate::stats::pairwise_sum(&costs.iter().map(|&c| ternary_entropy(change_probability(lambda, c))).collect::<Vec<_>>())
}

/// Solves Σ H₃(β(λ, ρᵢ)) = `target_bits` for λ by bracketing and bisection.
pub fn solve_lambda(costs: &[f64], target_bits: f64) -> Result<f64> {
    let capacity = costs.len() as f64 * 3f64.log2();
    if costs.is_empty() || !(target_bits > 0.0) || target_bits > capacity {
        return Err(Error::InvalidParameter(format!("target {target_bits} bits outside (0, {capacity}]")));
    }
    let tol = 1e-4 * target_bits;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut steps = 0;
    while total_entropy(costs, hi) > target_bits {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BISECTION_STEPS {
            return Err(Error::BisectionDiverged(steps));
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let h = total_entropy(costs, mid);
        if (h - target_bits).abs() <= tol {
            return Ok(mid);
        }
        if h > target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionDiverged(MAX_BISECTION_STEPS))
}

/// Per-coefficient costs; DC entries are `f64::INFINITY`.
pub fn embedding_costs(cover: &CoefficientImage, model: CostModel) -> Vec<f64> {
    let mut costs = Vec::with_capacity(cover.coefs.len());
    for block in cover.coefs.chunks_exact(64) {
        let energy: f64 = block[1..].iter().map(|&c| (c as f64).abs()).sum();
        costs.push(f64::INFINITY);
        for i in 1..64 {
            costs.push(match model {
                CostModel::Uniform => 1.0,
                CostModel::BlockEnergy => cover.quant[i] as f64 / (1.0 + energy),
            });
        }
    }
    costs
}

pub fn embed(cover: &CoefficientImage, config: &EmbedConfig) -> Result<EmbedOutcome> {
    config.validate()?;
    let nnz = cover.nonzero_ac();
    if nnz == 0 {
        return Err(Error::EmptyEmbeddingChannel);
    }
    let costs = embedding_costs(cover, config.cost_model);
    let ac: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    let target_bits = config.payload * nnz as f64;
    let lambda = solve_lambda(&ac, target_bits)?;

    let mut rng = seeds::rng_for(config.seed, &[seeds::tag::EMBED]);
    let mut stego = cover.clone();
    let mut changes = 0;
    for (i, c) in stego.coefs.iter_mut().enumerate() {
        if i % 64 == 0 {
            continue;
        }
        let beta = change_probability(lambda, costs[i]);
        let u: f64 = rng.random();
        let delta = if u < beta {
            1
        } else if u < 2.0 * beta {
            -1
        } else {
            continue;
        };
        let moved = *c as i32 + delta;
        *c = if (-2048..=2047).contains(&moved) { moved } else { *c as i32 - delta } as i16;
        changes += 1;
    }
    Ok(EmbedOutcome { stego, lambda, entropy_bits: total_entropy(&ac, lambda), target_bits, changes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devsim::quant_table;

    fn grid(blocks: usize, seed: u64, dense: bool) -> CoefficientImage {
        let mut rng = seeds::rng(seed);
        let coefs = (0..blocks * 64)
            .map(|i| {
                let v: i16 = rng.random_range(-6..=6);
                if dense && i % 64 != 0 && v == 0 { 1 } else { v }
            })
            .collect();
        CoefficientImage { blocks_high: 1, blocks_wide: blocks, quant: quant_table(85), coefs }
    }

    #[test]
    fn entropy_endpoints() {
        assert_eq!(ternary_entropy(0.0), 0.0);
        assert!((ternary_entropy(1.0 / 3.0) - 3f64.log2()).abs() < 1e-12);
    }

    // Oracle: bisection on β directly for H₃(β) = h over (0, 1/3).
    fn beta_for_entropy(h: f64) -> f64 {
        let (mut lo, mut hi) = (1e-300f64, 1.0 / 3.0);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            let p = mid;
            let e = -2.0 * p * p.log2() - (1.0 - 2.0 * p) * (1.0 - 2.0 * p).log2();
            if e < h { lo = mid } else { hi = mid }
        }
        lo
    }

    #[test]
    fn uniform_change_rate_matches_scalar_root() {
        let cover = grid(1588, 5, true);
        let n_ac = 1588 * 63;
        assert_eq!(cover.nonzero_ac(), n_ac);
        let out = embed(&cover, &EmbedConfig { payload: 0.5, cost_model: CostModel::Uniform, seed: 11 }).unwrap();
        let expected = 2.0 * beta_for_entropy(0.5);
        let realized = out.changes as f64 / n_ac as f64;
        assert!((realized / expected - 1.0).abs() < 0.05, "{realized} vs {expected}");
    }

    #[test]
    fn entropy_hits_target_for_both_models() {
        for seed in 0..10 {
            for model in [CostModel::Uniform, CostModel::BlockEnergy] {
                let cover = grid(40, seed, false);
                let out = embed(&cover, &EmbedConfig { payload: 0.4, cost_model: model, seed }).unwrap();
                assert!((out.entropy_bits - out.target_bits).abs() <= 1e-3 * out.target_bits);
            }
        }
    }

    #[test]
    fn dc_is_never_touched() {
        let cover = grid(50, 1, false);
        let out = embed(&cover, &EmbedConfig { payload: 1.5, cost_model: CostModel::BlockEnergy, seed: 3 }).unwrap();
        for b in 0..50 {
            assert_eq!(out.stego.coefs[b * 64], cover.coefs[b * 64]);
        }
        assert!(out.changes > 0);
    }

    #[test]
    fn vanishing_payload_changes_nothing() {
        let cover = grid(50, 2, false);
        let out = embed(&cover, &EmbedConfig { payload: 1e-9, cost_model: CostModel::Uniform, seed: 4 }).unwrap();
        assert_eq!(out.changes, 0);
        assert_eq!(out.stego, cover);
    }

    #[test]
    fn errors() {
        let empty = CoefficientImage { blocks_high: 1, blocks_wide: 1, quant: quant_table(85), coefs: vec![0; 64] };
        assert!(matches!(embed(&empty, &EmbedConfig::default()), Err(Error::EmptyEmbeddingChannel)));
        let cover = grid(2, 0, false);
        assert!(embed(&cover, &EmbedConfig { payload: 0.0, ..EmbedConfig::default() }).is_err());
        assert!(embed(&cover, &EmbedConfig { payload: 1.6, ..EmbedConfig::default() }).is_err());
    }
}
