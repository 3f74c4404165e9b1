//! Regret distribution summaries per strategy and scenario.

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use crate::error::{Error, Result};
use crate::select::StrategyKind;
use crate::stats::quantile_sorted;

/// Regret above which a selection counts as a failure in `pct_over`.
pub const FAILURE_REGRET: f64 = 0.05;

/// Min, quartiles, max and failure percentage of clamped regrets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub max: f64,
    /// Percentage of regrets strictly above 5%.
    pub pct_over_5: f64,
}

impl RegretSummary {
    pub fn from_regrets(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptySet("regrets"));
        }
        let mut v: Vec<f64> = raw.iter().map(|r| r.max(0.0)).collect();
        v.sort_by(f64::total_cmp);
        let over = v.iter().filter(|&&r| r > FAILURE_REGRET).count();
        Ok(Self {
            count: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            q2: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            pct_over_5: 100.0 * over as f64 / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub strategy: StrategyKind,
    pub operational_size: usize,
    #[serde(flatten)]
    pub summary: RegretSummary,
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "strategy", "operational_size", "count", "min", "q1", "q2", "q3", "max", "pct_over_5"])?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.scenario.as_str().to_string(),
            r.strategy.as_str().to_string(),
            r.operational_size.to_string(),
            s.count.to_string(),
            s.min.to_string(),
            s.q1.to_string(),
            s.q2.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
            s.pct_over_5.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_clamps_and_counts() {
        let s = RegretSummary::from_regrets(&[-0.01, 0.0, 0.02, 0.06, 0.2]).unwrap();
        assert_eq!(s.min, 0.0);
        assert_eq!(s.max, 0.2);
        assert_eq!(s.q2, 0.02);
        assert_eq!(s.pct_over_5, 40.0);
        assert!(RegretSummary::from_regrets(&[]).is_err());
    }
}
