//! Separable filters on real-valued planes. Borders are handled by
//! clamping sample indices to the image.

use std::f64::consts::PI;

use super::params::ResizeKernel;
use crate::image::Plane;

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

fn convolve_separable(p: &Plane, taps: &[f64]) -> Plane {
    let r = (taps.len() / 2) as isize;
    let (h, w) = (p.height as isize, p.width as isize);
    let mut tmp = Plane::zeros(p.height, p.width);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = (x + k as isize - r).clamp(0, w - 1);
                s += t * p.data[(y * w + xx) as usize];
            }
            tmp.data[(y * w + x) as usize] = s;
        }
    }
    let mut out = Plane::zeros(p.height, p.width);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = (y + k as isize - r).clamp(0, h - 1);
                s += t * tmp.data[(yy * w + x) as usize];
            }
            out.data[(y * w + x) as usize] = s;
        }
    }
    out
}

/// Gaussian blur with standard deviation `sigma` (identity for 0).
pub fn gaussian_blur(p: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return p.clone();
    }
    convolve_separable(p, &gaussian_taps(sigma))
}

/// `out = in + amount · (in − blur(in, radius))`.
pub fn unsharp_mask(p: &Plane, amount: f64, radius: f64) -> Plane {
    if amount == 0.0 {
        return p.clone();
    }
    let blurred = gaussian_blur(p, radius);
    let mut out = p.clone();
    for (o, b) in out.data.iter_mut().zip(&blurred.data) {
        *o += amount * (*o - b);
    }
    out
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = PI * x;
        a.sin() / a
    }
}

impl ResizeKernel {
    fn support(self) -> f64 {
        match self {
            ResizeKernel::Nearest => 0.5,
            ResizeKernel::Bilinear => 1.0,
            ResizeKernel::Bicubic => 2.0,
            ResizeKernel::Lanczos3 => 3.0,
        }
    }

    fn weight(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            ResizeKernel::Nearest => {
                if a < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            ResizeKernel::Bilinear => (1.0 - a).max(0.0),
            // Catmull-Rom (a = −0.5)
            ResizeKernel::Bicubic => {
                if a < 1.0 {
                    1.5 * a * a * a - 2.5 * a * a + 1.0
                } else if a < 2.0 {
                    -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
                } else {
                    0.0
                }
            }
            ResizeKernel::Lanczos3 => {
                if a < 3.0 {
                    sinc(x) * sinc(x / 3.0)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-output-sample (first input index, normalized weights).
fn resample_weights(input: usize, output: usize, kernel: ResizeKernel) -> Vec<(usize, Vec<f64>)> {
    let scale = input as f64 / output as f64;
    let filter_scale = scale.max(1.0);
    let support = kernel.support() * filter_scale;
    (0..output)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            if kernel == ResizeKernel::Nearest {
                let i = (center.floor() as usize).min(input - 1);
                return (i, vec![1.0]);
            }
            let lo = ((center - support).floor() as isize).max(0) as usize;
            let hi = ((center + support).ceil() as usize).min(input);
            let mut w: Vec<f64> =
                (lo..hi).map(|i| kernel.weight((i as f64 + 0.5 - center) / filter_scale)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            (lo, w)
        })
        .collect()
}

/// Resizes by `factor` (output side = round(side · factor)), filtering
/// with the kernel stretched by the downscale ratio.
pub fn resize(p: &Plane, factor: f64, kernel: ResizeKernel) -> Plane {
    let oh = ((p.height as f64 * factor).round() as usize).max(1);
    let ow = ((p.width as f64 * factor).round() as usize).max(1);
    if oh == p.height && ow == p.width {
        return p.clone();
    }
    let wx = resample_weights(p.width, ow, kernel);
    let wy = resample_weights(p.height, oh, kernel);
    let mut tmp = Plane::zeros(p.height, ow);
    for y in 0..p.height {
        let row = &p.data[y * p.width..(y + 1) * p.width];
        for (x, (start, w)) in wx.iter().enumerate() {
            tmp.data[y * ow + x] = w.iter().enumerate().map(|(k, c)| c * row[start + k]).sum();
        }
    }
    let mut out = Plane::zeros(oh, ow);
    for (y, (start, w)) in wy.iter().enumerate() {
        for x in 0..ow {
            out.data[y * ow + x] = w.iter().enumerate().map(|(k, c)| c * tmp.data[(start + k) * ow + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Plane {
        let mut p = Plane::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                p.data[y * w + x] = (3 * x + 5 * y) as f64;
            }
        }
        p
    }

    #[test]
    fn blur_preserves_constants_and_mean_of_interior_ramp() {
        let mut c = Plane::zeros(20, 20);
        c.data.iter_mut().for_each(|v| *v = 42.0);
        assert!(gaussian_blur(&c, 1.5).data.iter().all(|v| (v - 42.0).abs() < 1e-12));
        let r = ramp(40, 40);
        let b = gaussian_blur(&r, 1.0);
        // linear signals are unchanged away from borders
        assert!((b.at(20, 20) - r.at(20, 20)).abs() < 1e-9);
    }

    #[test]
    fn unsharp_zero_amount_is_identity() {
        let r = ramp(16, 16);
        assert_eq!(unsharp_mask(&r, 0.0, 1.0), r);
        let s = unsharp_mask(&r, 1.0, 1.0);
        assert!((s.at(8, 8) - r.at(8, 8)).abs() < 1e-9);
    }

    #[test]
    fn resize_factor_one_is_identity_and_constants_survive() {
        let r = ramp(32, 32);
        for k in ResizeKernel::ALL {
            assert_eq!(resize(&r, 1.0, k), r);
            let mut c = Plane::zeros(30, 30);
            c.data.iter_mut().for_each(|v| *v = 9.0);
            let out = resize(&c, 0.5, k);
            assert_eq!((out.height, out.width), (15, 15));
            assert!(out.data.iter().all(|v| (v - 9.0).abs() < 1e-9), "{k:?}");
        }
    }
}
