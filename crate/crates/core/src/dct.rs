//! Orthonormal 8-point DCT-II shared by the JPEG codec and the DCTR kernels.
//!
//! The cosine table is built from literal constants rather than `f64::cos`
//! so the transform is bit-identical on every platform.

/// cos(m·π/16) for m = 0..=8.
const COS_SIXTEENTHS: [f64; 9] = [
    1.0,
    0.980_785_280_403_230_4,
    0.923_879_532_511_286_7,
    0.831_469_612_302_545_2,
    0.707_106_781_186_547_5,
    0.555_570_233_019_602_2,
    0.382_683_432_365_089_8,
    0.195_090_322_016_128_3,
    0.0,
];

/// 1/sqrt(8)
const DC_WEIGHT: f64 = 0.353_553_390_593_273_8;

/// `BASIS[k][n]` is the n-th sample of the k-th orthonormal DCT-II vector.
pub(crate) static BASIS: [[f64; 8]; 8] = build_basis_const();

const fn build_basis_const() -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    let mut k = 0;
    while k < 8 {
        let mut n = 0;
        while n < 8 {
            let m = ((2 * n + 1) * k) % 32;
            let r = if m <= 16 { m } else { 32 - m };
            let (r, neg) = if r <= 8 { (r, false) } else { (16 - r, true) };
            let c = COS_SIXTEENTHS[r];
            let w = if k == 0 { DC_WEIGHT } else { 0.5 };
            out[k][n] = if neg { -c * w } else { c * w };
            n += 1;
        }
        k += 1;
    }
    out
}

/// Forward 2-D DCT of one 8×8 block (row-major in, row-major out).
pub(crate) fn forward(block: &[f64; 64]) -> [f64; 64] {
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for k in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += BASIS[k][x] * block[y * 8 + x];
            }
            tmp[y * 8 + k] = s;
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for l in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += BASIS[k][y] * tmp[y * 8 + l];
            }
            out[k * 8 + l] = s;
        }
    }
    out
}

/// Inverse 2-D DCT of one 8×8 coefficient block.
pub(crate) fn inverse(coefs: &[f64; 64]) -> [f64; 64] {
    let mut tmp = [0.0; 64];
    for k in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for l in 0..8 {
                s += BASIS[l][x] * coefs[k * 8 + l];
            }
            tmp[k * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for k in 0..8 {
                s += BASIS[k][y] * tmp[k * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

fn cos_sixteenths(m: usize) -> f64 {
    let m = m % 32;
    let (r, sign) = if m <= 16 { (m, 1.0) } else { (32 - m, 1.0) };
    let (r, sign) = if r <= 8 { (r, sign) } else { (16 - r, -sign) };
    sign * COS_SIXTEENTHS[r]
}

    #[test]
    fn basis_matches_libm_cosines() {
        for k in 0..8 {
            let w = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for n in 0..8 {
                let expected = w * (std::f64::consts::PI * ((2 * n + 1) * k) as f64 / 16.0).cos();
                assert!((BASIS[k][n] - expected).abs() < 1e-15, "k={k} n={n}");
                let unscaled = cos_sixteenths((2 * n + 1) * k);
                assert!((unscaled * w - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = (0..8).map(|n| BASIS[a][n] * BASIS[b][n]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let mut block = [0.0; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f64 - 127.5;
        }
        let back = inverse(&forward(&block));
        for i in 0..64 {
            assert!((back[i] - block[i]).abs() < 1e-10);
        }
    }
}
