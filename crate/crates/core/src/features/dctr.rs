//! DCTR-style features: first-order histograms of the 64 DCT-basis
//! residuals of the decompressed image, split by JPEG-grid phase.
//!
//! For every kernel B(k,l) the pixel plane (centered at mid-gray) is
//! correlated with the 8×8 pattern over all valid offsets. Each response is
//! mapped to `min(T, round(|u| / q))` and counted in the histogram of its
//! phase class: the offset modulo 8 in each axis, folded by `a ↔ 8 − a`,
//! gives 5 × 5 = 25 classes. Every histogram is normalized to unit mass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dct::BASIS;
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DCTR_KERNELS: usize = 64;
pub const DCTR_PHASE_CLASSES: usize = 25;
const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DctrConfig {
    /// Truncation threshold T; histograms have T + 1 bins.
    pub truncation: usize,
    /// Quantization step q applied to |response|.
    pub q: f64,
}

impl DctrConfig {
    /// Step tied to the JPEG quality factor: `max(2, 4·50/qf)`.
    pub fn for_quality(qf: u8) -> Self {
        Self { truncation: 4, q: (4.0 * 50.0 / qf.max(1) as f64).max(2.0) }
    }

    pub fn bins(&self) -> usize {
        self.truncation + 1
    }

    /// Feature dimension: 64 · 25 · (T + 1).
    pub fn dim(&self) -> usize {
        DCTR_KERNELS * DCTR_PHASE_CLASSES * self.bins()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(Error::InvalidParameter(format!("DCTR quantization step must be > 0, got {}", self.q)));
        }
        Ok(())
    }
}

impl Default for DctrConfig {
    fn default() -> Self {
        Self::for_quality(85)
    }
}

#[inline]
fn fold(phase: usize) -> usize {
    phase.min(8 - phase)
}

/// Phase class of an offset, 0..25.
#[inline]
fn phase_class(y: usize, x: usize) -> usize {
    fold(y % 8) * 5 + fold(x % 8)
}

/// Feature layout: `((kernel · 25) + class) · (T + 1) + bin`, kernel = 8k + l.
pub fn extract_dctr(image: &GrayImage, config: &DctrConfig) -> Result<Vec<f32>> {
    config.validate()?;
    let (h, w) = (image.height(), image.width());
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::ImageTooSmall { height: h, width: w, min: MIN_SIDE });
    }
    let px: Vec<f64> = image.pixels().iter().map(|&p| p as f64 - 127.5).collect();
    let (oh, ow) = (h - 7, w - 7);

    // Horizontal pass: rowdct[(y · ow + x) · 8 + l] = Σ_n C[l][n] · X[y][x + n].
    let mut rowdct = vec![0.0f64; h * ow * 8];
    for y in 0..h {
        let row = &px[y * w..(y + 1) * w];
        for x in 0..ow {
            let out = &mut rowdct[(y * ow + x) * 8..(y * ow + x) * 8 + 8];
            for (l, o) in out.iter_mut().enumerate() {
                let c = &BASIS[l];
                let mut s = 0.0;
                for n in 0..8 {
                    s += c[n] * row[x + n];
                }
                *o = s;
            }
        }
    }

    let bins = config.bins();
    let t = config.truncation;
    let inv_q = 1.0 / config.q;
    let mut counts = vec![0u32; DCTR_KERNELS * DCTR_PHASE_CLASSES * bins];
    let mut class_totals = [0u32; DCTR_PHASE_CLASSES];
    let mut col = [0.0f64; 64];
    for y in 0..oh {
        for x in 0..ow {
            // Vertical pass over the 8 rows of this window.
            for m in 0..8 {
                let src = &rowdct[((y + m) * ow + x) * 8..((y + m) * ow + x) * 8 + 8];
                col[m * 8..m * 8 + 8].copy_from_slice(src);
            }
            let class = phase_class(y, x);
            class_totals[class] += 1;
            for k in 0..8 {
                let c = &BASIS[k];
                for l in 0..8 {
                    let mut u = 0.0;
                    for m in 0..8 {
                        u += c[m] * col[m * 8 + l];
                    }
                    let bin = ((u.abs() * inv_q).round() as usize).min(t);
                    counts[((k * 8 + l) * DCTR_PHASE_CLASSES + class) * bins + bin] += 1;
                }
            }
        }
    }

    let mut out = Vec::with_capacity(counts.len());
    for kernel in 0..DCTR_KERNELS {
        for class in 0..DCTR_PHASE_CLASSES {
            let total = class_totals[class] as f64;
            let base = (kernel * DCTR_PHASE_CLASSES + class) * bins;
            for b in 0..bins {
                out.push((counts[base + b] as f64 / total) as f32);
            }
        }
    }
    Ok(out)
}

/// Extracts features for a batch of images in parallel; output order
/// follows input order.
pub fn extract_dctr_batch(images: &[GrayImage], config: &DctrConfig) -> Result<Vec<Vec<f32>>> {
    images.par_iter().map(|img| extract_dctr(img, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, h: usize, w: usize) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(h, w, |_, _| rng.random())
    }

    /// Direct 2-D correlation with each 8×8 kernel, no separable shortcut.
    fn brute_force(image: &GrayImage, config: &DctrConfig) -> Vec<f32> {
        let (h, w) = (image.height(), image.width());
        let bins = config.bins();
        let mut counts = vec![0u32; config.dim()];
        let mut totals = [0u32; 25];
        for y in 0..h - 7 {
            for x in 0..w - 7 {
                let a = (y % 8).min(8 - y % 8);
                let b = (x % 8).min(8 - x % 8);
                let class = a * 5 + b;
                totals[class] += 1;
                for k in 0..8 {
                    for l in 0..8 {
                        let wk = if k == 0 { (0.125f64).sqrt() } else { 0.5 };
                        let wl = if l == 0 { (0.125f64).sqrt() } else { 0.5 };
                        let mut u = 0.0;
                        for m in 0..8 {
                            for n in 0..8 {
                                let basis = wk
                                    * wl
                                    * (std::f64::consts::PI * ((2 * m + 1) * k) as f64 / 16.0).cos()
                                    * (std::f64::consts::PI * ((2 * n + 1) * l) as f64 / 16.0).cos();
                                u += basis * (image.get(y + m, x + n) as f64 - 127.5);
                            }
                        }
                        let bin = ((u.abs() / config.q).round() as usize).min(config.truncation);
                        counts[((k * 8 + l) * 25 + class) * bins + bin] += 1;
                    }
                }
            }
        }
        let mut out = Vec::new();
        for kernel in 0..64 {
            for class in 0..25 {
                for b in 0..bins {
                    out.push((counts[(kernel * 25 + class) * bins + b] as f64 / totals[class] as f64) as f32);
                }
            }
        }
        out
    }

    #[test]
    fn default_dimension_is_8000() {
        let cfg = DctrConfig::default();
        assert_eq!(cfg.dim(), 8000);
        let f = extract_dctr(&random_image(1, 24, 32), &cfg).unwrap();
        assert_eq!(f.len(), 8000);
    }

    #[test]
    fn quality_linked_step() {
        assert!((DctrConfig::for_quality(85).q - 200.0 / 85.0).abs() < 1e-12);
        assert_eq!(DctrConfig::for_quality(100).q, 2.0);
        assert_eq!(DctrConfig::for_quality(50).q, 4.0);
    }

    #[test]
    fn constant_image_puts_ac_mass_in_bin_zero() {
        let cfg = DctrConfig::default();
        let f = extract_dctr(&GrayImage::filled(16, 16, 77), &cfg).unwrap();
        for kernel in 1..64 {
            for class in 0..25 {
                let base = (kernel * 25 + class) * 5;
                assert_eq!(f[base], 1.0, "kernel {kernel} class {class}");
            }
        }
    }

    #[test]
    fn histograms_have_unit_mass() {
        let cfg = DctrConfig::default();
        let f = extract_dctr(&random_image(2, 40, 48), &cfg).unwrap();
        for h in f.chunks(5) {
            let s: f64 = h.iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_brute_force_and_complement_symmetry() {
        let cfg = DctrConfig::default();
        for seed in 0..3 {
            let img = random_image(seed, 16, 16);
            let fast = extract_dctr(&img, &cfg).unwrap();
            assert_eq!(fast, brute_force(&img, &cfg));
            let comp = extract_dctr(&img.complement(), &cfg).unwrap();
            assert_eq!(fast, comp);
            assert_eq!(brute_force(&img.complement(), &cfg), fast);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = DctrConfig::default();
        let img = random_image(9, 32, 32);
        assert_eq!(extract_dctr(&img, &cfg).unwrap(), extract_dctr(&img, &cfg).unwrap());
    }

    #[test]
    fn rejects_small_images_and_bad_step() {
        let cfg = DctrConfig::default();
        assert!(matches!(
            extract_dctr(&GrayImage::filled(15, 30, 0), &cfg),
            Err(Error::ImageTooSmall { .. })
        ));
        let bad = DctrConfig { truncation: 4, q: 0.0 };
        assert!(matches!(extract_dctr(&GrayImage::filled(16, 16, 0), &bad), Err(Error::InvalidParameter(_))));
    }
}
