use crate::error::{Error, Result};
use crate::image::{GrayImage, Plane};

/// Candidate windows: a stride grid (stride = crop/2) plus the centered window.
fn candidates(h: usize, w: usize, crop: usize) -> Vec<(usize, usize)> {
    let stride = (crop / 2).max(1);
    let mut out = Vec::new();
    for top in (0..=h - crop).step_by(stride) {
        for left in (0..=w - crop).step_by(stride) {
            out.push((top, left));
        }
    }
    out.push(((h - crop) / 2, (w - crop) / 2));
    out.sort_unstable();
    out.dedup();
    out
}

fn window_variance(p: &Plane, top: usize, left: usize, crop: usize) -> f64 {
    let mut s = 0.0;
    let mut s2 = 0.0;
    for y in top..top + crop {
        for &v in &p.data[y * p.width + left..y * p.width + left + crop] {
            s += v;
            s2 += v * v;
        }
    }
    let n = (crop * crop) as f64;
    let m = s / n;
    (s2 / n - m * m).max(0.0)
}

/// Origin of the most textured (highest-variance) candidate window; ties
/// go to the smallest (row, col).
pub fn smart_crop_origin(p: &Plane, crop: usize) -> Result<(usize, usize)> {
    if crop == 0 || p.height < crop || p.width < crop {
        return Err(Error::ImageTooSmall { height: p.height, width: p.width, min: crop });
    }
    let mut best = None;
    let mut best_var = f64::NEG_INFINITY;
    for (top, left) in candidates(p.height, p.width, crop) {
        let v = window_variance(p, top, left, crop);
        if v > best_var {
            best_var = v;
            best = Some((top, left));
        }
    }
    Ok(best.expect("at least one candidate"))
}

pub(crate) fn smart_crop_plane(p: &Plane, crop: usize) -> Result<Plane> {
    let (top, left) = smart_crop_origin(p, crop)?;
    Ok(p.window(top, left, crop))
}

pub fn smart_crop(image: &GrayImage, crop: usize) -> Result<GrayImage> {
    Ok(smart_crop_plane(&image.to_plane(), crop)?.to_gray())
}
