//! L2-regularized logistic regression on standardized features.

use serde::{Deserialize, Serialize};

use super::eval::{self, Sweep};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{axpy, dot};
use crate::SourceId;

/// Classes smaller than this train but are flagged `low_confidence`.
pub const MIN_CONFIDENT_CLASS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub reg: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { reg: 1e-3, max_iters: 500, grad_tol: 1e-7 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg > 0.0 && self.reg.is_finite()) {
            return Err(Error::InvalidParameter(format!("reg must be > 0, got {}", self.reg)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    /// Objective value at initialization followed by one entry per accepted step.
    pub loss_trace: Vec<f64>,
    pub final_grad_norm: f64,
    pub low_confidence: bool,
}

/// Linear scoring rule `s(x) = w·x + b`; `s(x) > threshold` means stego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDetector {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub trained_on: SourceId,
    pub reg: f64,
    pub low_confidence: bool,
}

impl LinearDetector {
    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f32]) -> f64 {
        let mut acc = [0.0f64; 4];
        let (cw, cx) = (self.weights.chunks_exact(4), x.chunks_exact(4));
        let tail: f64 = cw.remainder().iter().zip(cx.remainder()).map(|(w, &v)| w * v as f64).sum();
        for (w, v) in cw.zip(cx) {
            for i in 0..4 {
                acc[i] += w[i] * v[i] as f64;
            }
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail + self.bias
    }

    pub fn scores(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.d() != self.d() {
            return Err(Error::DimensionMismatch { left: self.d(), right: features.d() });
        }
        Ok(features.rows().map(|r| self.score(r)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().chain([&self.bias, &self.threshold]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("detector parameters"));
        }
        Ok(())
    }
}

struct Problem {
    x: Vec<f64>,
    y: Vec<f64>,
    d: usize,
    reg: f64,
}

impl Problem {
    fn n(&self) -> usize {
        self.y.len()
    }

    /// Parameters are `[w; b]`; the bias is not regularized.
    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (d, n) = (self.d, self.n() as f64);
        let (w, b) = (&theta[..d], theta[d]);
        grad.fill(0.0);
        let mut loss = 0.0;
        for (row, &y) in self.x.chunks_exact(d).zip(&self.y) {
            let z = dot(row, w) + b;
            // log(1 + e^{−yz}) and its derivative, computed stably
            let m = -y * z;
            loss += if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            let sig = 1.0 / (1.0 + (-m).exp());
            let coef = -y * sig / n;
            axpy(coef, row, &mut grad[..d]);
            grad[d] += coef;
        }
        loss /= n;
        loss += 0.5 * self.reg * dot(w, w);
        axpy(self.reg, w, &mut grad[..d]);
        loss
    }
}

/// Fits the detector; covers are labeled −1, stegos +1.
pub fn train_detector(
    covers: &FeatureMatrix,
    stegos: &FeatureMatrix,
    config: &DetectorConfig,
    trained_on: SourceId,
) -> Result<(LinearDetector, TrainDiagnostics)> {
    config.validate()?;
    covers.check_same_dim(stegos)?;
    if covers.has_non_finite() || stegos.has_non_finite() {
        return Err(Error::NonFinite("training features"));
    }
    let d = covers.d();
    let n = covers.n() + stegos.n();
    let mut mean = vec![0.0; d];
    for r in covers.rows().chain(stegos.rows()) {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in covers.rows().chain(stegos.rows()) {
        for ((s, &v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let inv_sd: Vec<f64> =
        var.iter().map(|&s| { let sd = (s / n as f64).sqrt(); if sd > 1e-12 { 1.0 / sd } else { 0.0 } }).collect();

    let mut x = Vec::with_capacity(n * d);
    for r in covers.rows().chain(stegos.rows()) {
        x.extend(r.iter().zip(&mean).zip(&inv_sd).map(|((&v, m), s)| (v as f64 - m) * s));
    }
    let y: Vec<f64> = std::iter::repeat_n(-1.0, covers.n()).chain(std::iter::repeat_n(1.0, stegos.n())).collect();
    let problem = Problem { x, y, d, reg: config.reg };
    let (theta, loss_trace, final_grad_norm) = lbfgs(&problem, config);

    // fold the standardization into raw-feature weights
    let weights: Vec<f64> = theta[..d].iter().zip(&inv_sd).map(|(w, s)| w * s).collect();
    let bias = theta[d] - dot(&weights, &mean);
    let mut det = LinearDetector {
        weights,
        bias,
        threshold: 0.0,
        trained_on,
        reg: config.reg,
        low_confidence: covers.n() < MIN_CONFIDENT_CLASS || stegos.n() < MIN_CONFIDENT_CLASS,
    };
    let (sc, ss) = (det.scores(covers)?, det.scores(stegos)?);
    let sweep = eval::sweep(&sc, &ss)?;
    // an infinite sweep threshold means "one class for everything"; keep it finite
    let (lo, hi) = sc.iter().chain(&ss).fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    det.threshold = sweep.threshold.clamp(lo - 1.0, hi + 1.0);
    det.validate()?;
    let low_confidence = det.low_confidence;
    Ok((det, TrainDiagnostics { loss_trace, final_grad_norm, low_confidence }))
}

const LBFGS_MEMORY: usize = 10;

/// Limited-memory BFGS from θ = 0 with Armijo backtracking; every accepted
/// step strictly lowers the objective.
fn lbfgs(p: &Problem, config: &DetectorConfig) -> (Vec<f64>, Vec<f64>, f64) {
    let dim = p.d + 1;
    let mut theta = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut loss = p.loss_grad(&theta, &mut grad);
    let mut trace = vec![loss];
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut trial = vec![0.0; dim];
    let mut trial_grad = vec![0.0; dim];

    for _ in 0..config.max_iters {
        if dot(&grad, &grad).sqrt() <= config.grad_tol {
            break;
        }
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, yv, &mut q);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = hist.last() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            axpy(a - b, s, &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = grad.iter().map(|v| -v).collect();
            slope = dot(&grad, &dir);
        }

        let mut step = if hist.is_empty() { 1.0 / dot(&grad, &grad).sqrt().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..dim {
                trial[i] = theta[i] + step * dir[i];
            }
            let l = p.loss_grad(&trial, &mut trial_grad);
            if l.is_finite() && l < loss && l <= loss + 1e-4 * step * slope {
                accepted = Some(l);
                break;
            }
            step *= 0.5;
        }
        let Some(new_loss) = accepted else { break };

        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == LBFGS_MEMORY {
                hist.remove(0);
            }
            hist.push((s, yv, 1.0 / sy));
        }
        std::mem::swap(&mut theta, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        loss = new_loss;
        trace.push(loss);
    }
    let gnorm = dot(&grad, &grad).sqrt();
    (theta, trace, gnorm)
}

/// Training-set error of the stored threshold; convenience for diagnostics.
pub fn training_sweep(det: &LinearDetector, covers: &FeatureMatrix, stegos: &FeatureMatrix) -> Result<Sweep> {
    eval::sweep(&det.scores(covers)?, &det.scores(stegos)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, shift: f64, seed: u64) -> FeatureMatrix {
        let mut rng = seeds::rng(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|j| rng.sample::<f64, _>(StandardNormal) + if j == 0 { shift } else { 0.0 }).collect()).collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn separable_classes_train_to_zero_error() {
        let (c, s) = (gaussian(50, 5, -10.0, 1), gaussian(50, 5, 10.0, 2));
        let (det, _) = train_detector(&c, &s, &DetectorConfig::default(), SourceId(0)).unwrap();
        assert_eq!(training_sweep(&det, &c, &s).unwrap().p_e, 0.0);
        let sc = det.scores(&c).unwrap();
        assert!(sc.iter().all(|&v| v <= det.threshold));
    }

    #[test]
    fn identical_classes_carry_no_signal() {
        let c = gaussian(200, 5, 0.0, 3);
        let (det, _) = train_detector(&c, &c, &DetectorConfig::default(), SourceId(0)).unwrap();
        let pe = training_sweep(&det, &c, &c).unwrap().p_e;
        assert!((0.45..=0.55).contains(&pe), "{pe}");
    }

    #[test]
    fn loss_decreases_strictly_from_zero_init() {
        let (c, s) = (gaussian(60, 20, -0.5, 4), gaussian(60, 20, 0.5, 5));
        let (_, diag) = train_detector(&c, &s, &DetectorConfig::default(), SourceId(0)).unwrap();
        assert!((diag.loss_trace[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(diag.loss_trace.windows(2).all(|w| w[1] < w[0]));
        assert!(diag.loss_trace.len() > 2);
    }

    #[test]
    fn small_classes_are_flagged_and_nan_rejected() {
        let (c, s) = (gaussian(5, 3, -1.0, 6), gaussian(30, 3, 1.0, 7));
        let (det, diag) = train_detector(&c, &s, &DetectorConfig::default(), SourceId(2)).unwrap();
        assert!(det.low_confidence && diag.low_confidence);
        let bad = FeatureMatrix::new(1, 3, vec![f32::NAN, 0.0, 0.0], vec!["x".into()]);
        assert!(bad.is_err() || train_detector(&bad.unwrap(), &s, &DetectorConfig::default(), SourceId(0)).is_err());
    }

    #[test]
    fn deterministic() {
        let (c, s) = (gaussian(40, 8, -0.3, 8), gaussian(40, 8, 0.3, 9));
        let a = train_detector(&c, &s, &DetectorConfig::default(), SourceId(0)).unwrap();
        let b = train_detector(&c, &s, &DetectorConfig::default(), SourceId(0)).unwrap();
        assert_eq!(a, b);
    }
}
