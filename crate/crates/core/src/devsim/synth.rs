//! Synthetic stand-ins for high-resolution sensor captures.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::seeds;

pub const MIN_RAW_SIZE: usize = 128;

/// Power-law Gaussian field with the spectral exponent drawn from [1.0, 2.5].
pub fn synth_raw(seed: u64, size: usize) -> Result<GrayImage> {
    let mut rng = seeds::rng_for(seed, &[seeds::tag::RAW_SYNTH]);
    let exponent = rng.random_range(1.0..=2.5);
    synth_raw_with_exponent(seed, size, exponent)
}

/// Power spectrum ∝ f^(−exponent), plus a random illumination gradient, quantized to 8 bits.
pub fn synth_raw_with_exponent(seed: u64, size: usize, exponent: f64) -> Result<GrayImage> {
    if size < MIN_RAW_SIZE {
        return Err(Error::ImageTooSmall { height: size, width: size, min: MIN_RAW_SIZE });
    }
    if !exponent.is_finite() || exponent < 0.0 {
        return Err(Error::InvalidParameter(format!("spectral exponent {exponent}")));
    }
    let mut rng = seeds::rng_for(seed, &[seeds::tag::RAW_SYNTH, 1]);
    let n = size;
    let mut field: Vec<Complex64> =
        (0..n * n).map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0)).collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fft2(&mut field, n, fwd.as_ref());
    let freq = |k: usize| {
        let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        k / n as f64
    };
    for v in 0..n {
        for u in 0..n {
            let f = (freq(u).powi(2) + freq(v).powi(2)).sqrt();
            let gain = if f == 0.0 { 0.0 } else { f.powf(-exponent / 2.0) };
            field[v * n + u] *= gain;
        }
    }
    fft2(&mut field, n, inv.as_ref());

    let re: Vec<f64> = field.iter().map(|c| c.re).collect();
    let mean = re.iter().sum::<f64>() / re.len() as f64;
    let sd = (re.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / re.len() as f64).sqrt().max(1e-12);

    let contrast = rng.random_range(15.0..35.0);
    let level = rng.random_range(105.0..150.0);
    let tilt = rng.random_range(0.0..20.0);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (gy, gx) = (angle.sin() * tilt, angle.cos() * tilt);
    let half = (n as f64 - 1.0) / 2.0;
    let pixels = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 - half, (i % n) as f64 - half);
            let ramp = (gy * y + gx * x) / n as f64;
            (level + ramp + contrast * (re[i] - mean) / sd).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(n, n, pixels)
}

fn fft2(data: &mut [Complex64], n: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = data[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            data[y * n + x] = col[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_abs_gradient(img: &GrayImage) -> f64 {
        let (h, w) = (img.height(), img.width());
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                s += (img.get(y, x + 1) as f64 - img.get(y, x) as f64).abs();
            }
        }
        s / ((w - 1) * h) as f64
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_raw(9, 128).unwrap(), synth_raw(9, 128).unwrap());
    }

    #[test]
    fn neighbouring_seeds_differ() {
        for s in 0..10u64 {
            let (a, b) = (synth_raw(s, 128).unwrap(), synth_raw(s + 1, 128).unwrap());
            let mad = a.pixels().iter().zip(b.pixels()).map(|(&p, &q)| (p as f64 - q as f64).abs()).sum::<f64>()
                / a.pixels().len() as f64;
            assert!(mad > 1.0, "seed {s}: {mad}");
        }
    }

    #[test]
    fn steeper_spectrum_is_smoother() {
        let (mut rough, mut smooth) = (0.0, 0.0);
        for s in 0..50 {
            rough += mean_abs_gradient(&synth_raw_with_exponent(s, 128, 1.0).unwrap());
            smooth += mean_abs_gradient(&synth_raw_with_exponent(s, 128, 2.5).unwrap());
        }
        assert!(smooth < rough, "{smooth} vs {rough}");
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(synth_raw(0, 64), Err(Error::ImageTooSmall { .. })));
    }
}
