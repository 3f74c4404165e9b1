//! Simulated annealing over pipeline parameters, minimizing NSCD to a target subspace.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devsim::{self, ResizeKernel};
use crate::error::{Error, Result};
use crate::features::{extract_dctr, DctrConfig, FeatureMatrix};
use crate::image::GrayImage;
use crate::subspace::{self, Subspace, DEFAULT_VARIANCE_THRESHOLD};
use crate::{seeds, PipelineParams};

pub const MIN_BATCH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub max_iters: usize,
    pub t0: f64,
    pub cooling: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { max_iters: 100, t0: 0.05, cooling: 0.95, batch_size: 200, seed: 0 }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return bad(format!("t0 must be > 0, got {}", self.t0));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad(format!("cooling must be in (0, 1), got {}", self.cooling));
        }
        if self.batch_size < MIN_BATCH {
            return bad(format!("batch_size must be >= {MIN_BATCH}, got {}", self.batch_size));
        }
        Ok(())
    }

    /// `t0 · coolingᵏ`.
    pub fn temperature(&self, k: usize) -> f64 {
        self.t0 * self.cooling.powi(k as i32)
    }
}

/// Search box for the three continuous factors, stepped on a lattice of
/// `steps` increments per range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub denoise_sigma: (f64, f64),
    pub resize_factor: (f64, f64),
    pub sharpen_amount: (f64, f64),
    pub kernels: Vec<ResizeKernel>,
    pub steps: u32,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            denoise_sigma: (0.0, 2.0),
            resize_factor: (0.5, 1.0),
            sharpen_amount: (0.0, 1.8),
            kernels: ResizeKernel::ALL.to_vec(),
            steps: 10,
        }
    }
}

/// Lattice coordinates of a parameter point: (denoise, resize, sharpen, kernel).
pub type LatticeKey = (i64, i64, i64, ResizeKernel);

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in
            [("denoise_sigma", self.denoise_sigma), ("resize_factor", self.resize_factor), ("sharpen_amount", self.sharpen_amount)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!("{name} bounds must satisfy lo < hi")));
            }
        }
        if self.kernels.is_empty() || self.steps == 0 {
            return Err(Error::InvalidParameter("bounds need at least one kernel and one step".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [self.denoise_sigma, self.resize_factor, self.sharpen_amount]
    }

    fn index(&self, v: f64, (lo, hi): (f64, f64)) -> i64 {
        let step = (hi - lo) / self.steps as f64;
        ((v.clamp(lo, hi) - lo) / step).round() as i64
    }

    fn value(&self, i: i64, (lo, hi): (f64, f64)) -> f64 {
        if i == self.steps as i64 {
            return hi;
        }
        lo + (hi - lo) * i as f64 / self.steps as f64
    }

    pub fn key(&self, p: &PipelineParams) -> LatticeKey {
        let [d, r, s] = self.ranges();
        (self.index(p.denoise_sigma, d), self.index(p.resize_factor, r), self.index(p.sharpen_amount, s), p.resize_kernel)
    }

    /// Moves `p` to the nearest lattice point inside the box.
    pub fn snap(&self, p: &PipelineParams) -> PipelineParams {
        let [d, r, s] = self.ranges();
        let (i, j, k, _) = self.key(p);
        PipelineParams {
            denoise_sigma: self.value(i, d),
            resize_factor: self.value(j, r),
            sharpen_amount: self.value(k, s),
            ..*p
        }
    }

    /// Centre of the box; fields outside the search come from `base`.
    pub fn midpoint(&self, base: &PipelineParams) -> PipelineParams {
        let [d, r, s] = self.ranges();
        let mid = self.steps as i64 / 2;
        PipelineParams {
            denoise_sigma: self.value(mid, d),
            resize_factor: self.value(mid, r),
            sharpen_amount: self.value(mid, s),
            resize_kernel: self.kernels[0],
            ..*base
        }
    }

    pub fn contains(&self, p: &PipelineParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.denoise_sigma, self.denoise_sigma)
            && inside(p.resize_factor, self.resize_factor)
            && inside(p.sharpen_amount, self.sharpen_amount)
            && self.kernels.contains(&p.resize_kernel)
    }
}

fn reflect(i: i64, max: i64) -> i64 {
    if i < 0 {
        -i
    } else if i > max {
        2 * max - i
    } else {
        i
    }
}

/// One lattice step (10% of the range by default) up or down on a single
/// uniformly chosen factor, reflected at the bounds; with probability 0.1
/// the resize kernel is redrawn among the other allowed kernels instead.
pub fn propose(params: &PipelineParams, bounds: &ParamBounds, rng: &mut ChaCha8Rng) -> PipelineParams {
    let p = bounds.snap(params);
    let kernel_move: bool = rng.random_bool(0.1);
    if kernel_move && bounds.kernels.len() > 1 {
        let others: Vec<ResizeKernel> = bounds.kernels.iter().copied().filter(|&k| k != p.resize_kernel).collect();
        let k = others[rng.random_range(0..others.len())];
        return PipelineParams { resize_kernel: k, ..p };
    }
    let field = rng.random_range(0..3usize);
    let delta = if rng.random_bool(0.5) { 1 } else { -1 };
    let max = bounds.steps as i64;
    let ranges = bounds.ranges();
    let (i, j, k, _) = bounds.key(&p);
    let mut idx = [i, j, k];
    idx[field] = reflect(idx[field] + delta, max);
    PipelineParams {
        denoise_sigma: bounds.value(idx[0], ranges[0]),
        resize_factor: bounds.value(idx[1], ranges[1]),
        sharpen_amount: bounds.value(idx[2], ranges[2]),
        ..p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub nscd: f64,
    /// The candidate batch had no usable variance; `nscd` is pinned to 1.
    pub degenerate: bool,
}

/// Anything that scores a parameter point.
pub trait Objective: Sync {
    fn evaluate(&self, params: &PipelineParams) -> Result<ObjectiveValue>;
}

impl<F> Objective for F
where
    F: Fn(&PipelineParams) -> Result<ObjectiveValue> + Sync,
{
    fn evaluate(&self, params: &PipelineParams) -> Result<ObjectiveValue> {
        self(params)
    }
}

/// Develops a batch of covers from a fixed raw pool and compares its PCA
/// subspace with the target.
pub struct NscdObjective<'a> {
    target: &'a Subspace,
    batch: Vec<&'a GrayImage>,
    dctr: DctrConfig,
    cache: Mutex<HashMap<LatticeKey, ObjectiveValue>>,
    bounds: ParamBounds,
    variance_threshold: f64,
}

impl<'a> NscdObjective<'a> {
    /// The batch is a seed-determined subset of `raw_pool`.
    pub fn new(
        target: &'a Subspace,
        raw_pool: &'a [GrayImage],
        batch_size: usize,
        seed: u64,
        dctr: DctrConfig,
        bounds: ParamBounds,
    ) -> Result<Self> {
        if raw_pool.len() < batch_size {
            return Err(Error::InsufficientSamples { needed: batch_size, got: raw_pool.len() });
        }
        let mut order: Vec<usize> = (0..raw_pool.len()).collect();
        order.shuffle(&mut seeds::rng_for(seed, &[seeds::tag::SUBSAMPLE]));
        order.truncate(batch_size);
        order.sort_unstable();
        Ok(Self { target, batch: order.into_iter().map(|i| &raw_pool[i]).collect(), dctr, cache: Mutex::default(), bounds, variance_threshold: DEFAULT_VARIANCE_THRESHOLD })
    }

    pub fn with_variance_threshold(mut self, threshold: f64) -> Self {
        self.variance_threshold = threshold;
        self
    }

    pub fn features(&self, params: &PipelineParams) -> Result<FeatureMatrix> {
        let rows = self
            .batch
            .par_iter()
            .map(|raw| extract_dctr(&devsim::develop(raw, params)?.image, &self.dctr))
            .collect::<Result<Vec<_>>>()?;
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        FeatureMatrix::from_vectors(rows, ids)
    }

    fn compute(&self, params: &PipelineParams) -> Result<ObjectiveValue> {
        let f = self.features(params)?;
        match subspace::pca_subspace(&f, self.variance_threshold) {
            Ok(s) => Ok(ObjectiveValue { nscd: subspace::nscd(&s, self.target)?, degenerate: false }),
            Err(Error::DegenerateData | Error::InsufficientSamples { .. }) => Ok(ObjectiveValue { nscd: 1.0, degenerate: true }),
            Err(e) => Err(e),
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl Objective for NscdObjective<'_> {
    fn evaluate(&self, params: &PipelineParams) -> Result<ObjectiveValue> {
        let key = self.bounds.key(params);
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.compute(&self.bounds.snap(params))?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub params: PipelineParams,
    pub nscd: f64,
    pub accepted: bool,
    pub temperature: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealTrace {
    /// Record 0 is the start point; each later record is one proposal.
    pub records: Vec<TraceRecord>,
    pub best_params: PipelineParams,
    pub best_nscd: f64,
}

impl AnnealTrace {
    /// Running minimum of the objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |m, r| {
                *m = m.min(r.nscd);
                Some(*m)
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "iter",
            "denoise_sigma",
            "resize_factor",
            "resize_kernel",
            "sharpen_amount",
            "sharpen_radius",
            "crop_size",
            "jpeg_qf",
            "nscd",
            "accepted",
            "temperature",
            "degenerate",
        ])?;
        for r in &self.records {
            let p = &r.params;
            w.write_record([
                r.iter.to_string(),
                p.denoise_sigma.to_string(),
                p.resize_factor.to_string(),
                p.resize_kernel.as_str().to_string(),
                p.sharpen_amount.to_string(),
                p.sharpen_radius.to_string(),
                p.crop_size.to_string(),
                p.jpeg_qf.to_string(),
                r.nscd.to_string(),
                r.accepted.to_string(),
                r.temperature.to_string(),
                r.degenerate.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })
    }
}

fn score(objective: &dyn Objective, p: &PipelineParams) -> ObjectiveValue {
    objective.evaluate(p).unwrap_or(ObjectiveValue { nscd: 1.0, degenerate: true })
}

/// Metropolis search with geometric cooling; `max_iters` records in total.
pub fn anneal(
    start: &PipelineParams,
    objective: &dyn Objective,
    bounds: &ParamBounds,
    config: &AnnealConfig,
) -> Result<AnnealTrace> {
    config.validate()?;
    bounds.validate()?;
    start.validate()?;
    let mut rng = seeds::rng_for(config.seed, &[seeds::tag::ANNEAL]);
    let mut current = bounds.snap(start);
    let first = score(objective, &current);
    let mut current_value = first.nscd;
    let mut records = vec![TraceRecord {
        iter: 0,
        params: current,
        nscd: first.nscd,
        accepted: true,
        temperature: config.temperature(0),
        degenerate: first.degenerate,
    }];
    let (mut best_params, mut best_nscd) = (current, current_value);
    for k in 1..config.max_iters {
        let temperature = config.temperature(k);
        let candidate = propose(&current, bounds, &mut rng);
        let v = score(objective, &candidate);
        let delta = v.nscd - current_value;
        let u: f64 = rng.random();
        let accepted = delta <= 0.0 || u < (-delta / temperature).exp();
        if accepted {
            current = candidate;
            current_value = v.nscd;
        }
        if v.nscd < best_nscd {
            best_nscd = v.nscd;
            best_params = candidate;
        }
        records.push(TraceRecord { iter: k, params: candidate, nscd: v.nscd, accepted, temperature, degenerate: v.degenerate });
    }
    Ok(AnnealTrace { records, best_params, best_nscd })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mid() -> PipelineParams {
        PipelineParams { denoise_sigma: 1.0, resize_factor: 0.75, sharpen_amount: 0.9, ..PipelineParams::default() }
    }

    // smooth bowl over the lattice, minimum at (0.4, 0.9, 1.44)
    fn bowl(p: &PipelineParams) -> Result<ObjectiveValue> {
        let v = ((p.denoise_sigma - 0.4) / 2.0).powi(2)
            + ((p.resize_factor - 0.9) / 0.5).powi(2)
            + ((p.sharpen_amount - 1.44) / 1.8).powi(2)
            + if p.resize_kernel == ResizeKernel::Bilinear { 0.0 } else { 0.02 };
        Ok(ObjectiveValue { nscd: (v / 3.1).min(1.0), degenerate: false })
    }

    fn differing_fields(a: &PipelineParams, b: &PipelineParams) -> usize {
        (a.denoise_sigma != b.denoise_sigma) as usize
            + (a.resize_factor != b.resize_factor) as usize
            + (a.sharpen_amount != b.sharpen_amount) as usize
            + (a.resize_kernel != b.resize_kernel) as usize
    }

    #[test]
    fn proposals_change_one_field_and_stay_in_bounds() {
        let bounds = ParamBounds::default();
        let mut rng = seeds::rng(1);
        let start = bounds.snap(&mid());
        for _ in 0..10_000 {
            let q = propose(&start, &bounds, &mut rng);
            assert_eq!(differing_fields(&start, &q), 1);
            assert!(bounds.contains(&q));
            q.validate().unwrap();
        }
        let mut p = start;
        for _ in 0..10_000 {
            p = propose(&p, &bounds, &mut rng);
            assert!(bounds.contains(&p));
        }
    }

    #[test]
    fn reflection_at_bounds() {
        let bounds = ParamBounds { kernels: vec![ResizeKernel::Bilinear], ..ParamBounds::default() };
        let corner = PipelineParams { denoise_sigma: 0.0, resize_factor: 1.0, sharpen_amount: 0.0, ..PipelineParams::default() };
        let mut rng = seeds::rng(2);
        for _ in 0..200 {
            let q = propose(&corner, &bounds, &mut rng);
            assert!(q.denoise_sigma == 0.0 || q.denoise_sigma == 0.2);
            assert!(q.resize_factor == 1.0 || (q.resize_factor - 0.95).abs() < 1e-12);
            assert_eq!(differing_fields(&corner, &q), 1);
        }
    }

    #[test]
    fn proposal_kernel_is_symmetric() {
        let bounds = ParamBounds::default();
        let a = bounds.snap(&mid());
        let b = PipelineParams { sharpen_amount: bounds.snap(&PipelineParams { sharpen_amount: 1.08, ..a }).sharpen_amount, ..a };
        let count = |from: &PipelineParams, to: &PipelineParams| {
            let mut rng = seeds::rng(3);
            (0..60_000).filter(|_| bounds.key(&propose(from, &bounds, &mut rng)) == bounds.key(to)).count() as f64 / 60_000.0
        };
        let (ab, ba) = (count(&a, &b), count(&b, &a));
        // exact probability 0.9 · 1/3 · 1/2 = 0.15 both ways
        assert!((ab - 0.15).abs() < 0.01 && (ba - 0.15).abs() < 0.01, "{ab} {ba}");
    }

    #[test]
    fn temperature_schedule_is_exact() {
        let c = AnnealConfig { max_iters: 30, ..AnnealConfig::default() };
        let t = anneal(&mid(), &bowl, &ParamBounds::default(), &c).unwrap();
        assert_eq!(t.records.len(), 30);
        for (k, r) in t.records.iter().enumerate() {
            let want = 0.05 * 0.95f64.powf(k as f64);
            assert!((r.temperature - want).abs() <= 1e-14 * want, "{k}: {}", r.temperature);
        }
    }

    #[test]
    fn best_is_prefix_minimum_and_reproducible() {
        let c = AnnealConfig { seed: 42, ..AnnealConfig::default() };
        let a = anneal(&mid(), &bowl, &ParamBounds::default(), &c).unwrap();
        let b = anneal(&mid(), &bowl, &ParamBounds::default(), &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.best_nscd, *a.best_so_far().last().unwrap());
        assert!(a.best_so_far().windows(2).all(|w| w[1] <= w[0]));
        assert!(a.best_nscd <= a.records[0].nscd);
        assert_eq!(bowl(&a.best_params).unwrap().nscd, a.best_nscd);
    }

    #[test]
    fn vanishing_temperature_is_greedy() {
        let c = AnnealConfig { t0: 1e-12, seed: 7, ..AnnealConfig::default() };
        let t = anneal(&mid(), &bowl, &ParamBounds::default(), &c).unwrap();
        let mut current = t.records[0].nscd;
        for r in &t.records[1..] {
            if r.accepted {
                assert!(r.nscd <= current);
                current = r.nscd;
            }
        }
        assert!(t.best_nscd < t.records[0].nscd);
    }

    #[test]
    fn objective_errors_become_flags() {
        let failing = |_: &PipelineParams| -> Result<ObjectiveValue> { Err(Error::DegenerateData) };
        let t = anneal(&mid(), &failing, &ParamBounds::default(), &AnnealConfig { max_iters: 5, ..AnnealConfig::default() }).unwrap();
        assert!(t.records.iter().all(|r| r.degenerate && r.nscd == 1.0));
    }

    #[test]
    fn config_validation() {
        assert!(AnnealConfig { batch_size: 29, ..AnnealConfig::default() }.validate().is_err());
        assert!(AnnealConfig { cooling: 1.0, ..AnnealConfig::default() }.validate().is_err());
        assert!(AnnealConfig { max_iters: 0, ..AnnealConfig::default() }.validate().is_err());
    }
}
