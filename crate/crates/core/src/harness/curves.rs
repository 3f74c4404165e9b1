//! Sliding-window quantile curves of regret against a normalized metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub const DEFAULT_WINDOW: f64 = 0.3;
pub const GRID_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub x: f64,
    pub count: usize,
    /// `None` when the window is empty.
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub q90: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub window: f64,
    pub points: Vec<WindowStats>,
}

/// Statistics of `regrets` whose paired metric lies in `[x − w/2, x + w/2]`
/// for x = 0, 0.01, …, 1 (windows clipped to [0, 1] implicitly).
pub fn quantile_curves(metric: &[f64], regrets: &[f64], window: f64) -> Result<QuantileCurve> {
    if metric.is_empty() {
        return Err(Error::EmptySet("metric values"));
    }
    if metric.len() != regrets.len() {
        return Err(Error::DimensionMismatch { left: metric.len(), right: regrets.len() });
    }
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!("window must be > 0, got {window}")));
    }
    if metric.iter().chain(regrets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curve input"));
    }
    let half = window / 2.0;
    let points = (0..=GRID_STEPS)
        .map(|i| {
            let x = i as f64 / GRID_STEPS as f64;
            let (lo, hi) = ((x - half).max(0.0), (x + half).min(1.0));
            let mut inside: Vec<f64> =
                metric.iter().zip(regrets).filter(|(m, _)| **m >= lo - 1e-12 && **m <= hi + 1e-12).map(|(_, r)| *r).collect();
            inside.sort_by(f64::total_cmp);
            let q = |p: f64| (!inside.is_empty()).then(|| quantile_sorted(&inside, p));
            WindowStats { x, count: inside.len(), q1: q(0.25), median: q(0.5), q3: q(0.75), q90: q(0.9) }
        })
        .collect();
    Ok(QuantileCurve { window, points })
}

impl QuantileCurve {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "count", "q1", "median", "q3", "q90"])?;
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for p in &self.points {
            w.write_record([p.x.to_string(), p.count.to_string(), f(p.q1), f(p.median), f(p.q3), f(p.q90)])?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
    }
}
