//! Grayscale baseline-JPEG quantization round trip (no entropy coding).

use crate::dct;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Standard luminance quantization table, natural (row-major) order.
pub const BASE_LUMINANCE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Base table scaled with the usual quality formula:
/// `scale = qf < 50 ? 5000/qf : 200 − 2·qf`, `q = clamp((q·scale + 50)/100, 1, 255)`.
pub fn quant_table(qf: u8) -> [u16; 64] {
    let qf = qf.clamp(1, 100) as u32;
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut out = [0u16; 64];
    for (o, &b) in out.iter_mut().zip(BASE_LUMINANCE_TABLE.iter()) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

/// Quantized DCT coefficients of a grayscale image, block-raster order,
/// 64 natural-order coefficients per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientImage {
    pub blocks_high: usize,
    pub blocks_wide: usize,
    pub quant: [u16; 64],
    pub coefs: Vec<i16>,
}

impl CoefficientImage {
    pub fn block(&self, by: usize, bx: usize) -> &[i16] {
        let b = by * self.blocks_wide + bx;
        &self.coefs[b * 64..(b + 1) * 64]
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks_high * self.blocks_wide
    }

    /// Number of nonzero AC coefficients.
    pub fn nonzero_ac(&self) -> usize {
        self.coefs.iter().enumerate().filter(|(i, &c)| i % 64 != 0 && c != 0).count()
    }
}

pub fn jpeg_roundtrip(image: &GrayImage, qf: u8) -> Result<(GrayImage, CoefficientImage)> {
    let (h, w) = (image.height(), image.width());
    if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
        return Err(Error::NotBlockAligned { height: h, width: w });
    }
    let quant = quant_table(qf);
    let (bh, bw) = (h / 8, w / 8);
    let mut coefs = Vec::with_capacity(h * w);
    for by in 0..bh {
        for bx in 0..bw {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = image.get(by * 8 + y, bx * 8 + x) as f64 - 128.0;
                }
            }
            let f = dct::forward(&block);
            for i in 0..64 {
                coefs.push((f[i] / quant[i] as f64).round().clamp(-2048.0, 2047.0) as i16);
            }
        }
    }
    let c = CoefficientImage { blocks_high: bh, blocks_wide: bw, quant, coefs };
    Ok((decompress(&c), c))
}

/// Dequantize, inverse DCT, level shift, round and clamp.
pub fn decompress(c: &CoefficientImage) -> GrayImage {
    let (h, w) = (c.blocks_high * 8, c.blocks_wide * 8);
    let mut pixels = vec![0u8; h * w];
    for by in 0..c.blocks_high {
        for bx in 0..c.blocks_wide {
            let src = c.block(by, bx);
            let mut deq = [0.0; 64];
            for i in 0..64 {
                deq[i] = src[i] as f64 * c.quant[i] as f64;
            }
            let px = dct::inverse(&deq);
            for y in 0..8 {
                for x in 0..8 {
                    pixels[(by * 8 + y) * w + bx * 8 + x] = (px[y * 8 + x] + 128.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    GrayImage::new(h, w, pixels).expect("sizes agree")
}

const COEF_MAGIC: &[u8; 4] = b"SGCF";
const COEF_VERSION: u32 = 1;

/// `"SGCF" | version u32 | blocks_high u32 | blocks_wide u32 | 64 × u16 quant | i16 coefs`, little-endian.
pub fn encode_coefficients(c: &CoefficientImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 128 + c.coefs.len() * 2);
    out.extend_from_slice(COEF_MAGIC);
    out.extend_from_slice(&COEF_VERSION.to_le_bytes());
    out.extend_from_slice(&(c.blocks_high as u32).to_le_bytes());
    out.extend_from_slice(&(c.blocks_wide as u32).to_le_bytes());
    for q in c.quant {
        out.extend_from_slice(&q.to_le_bytes());
    }
    for v in &c.coefs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_coefficients(buf: &[u8]) -> Result<CoefficientImage> {
    if buf.len() < 4 || &buf[..4] != COEF_MAGIC {
        return Err(Error::BadMagic);
    }
    if buf.len() < 16 + 128 {
        return Err(Error::Truncated("coefficient header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != COEF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (bh, bw) = (u32_at(8) as usize, u32_at(12) as usize);
    let mut quant = [0u16; 64];
    for (i, q) in quant.iter_mut().enumerate() {
        *q = u16::from_le_bytes(buf[16 + 2 * i..18 + 2 * i].try_into().unwrap());
    }
    let n = bh
        .checked_mul(bw)
        .and_then(|b| b.checked_mul(64))
        .ok_or(Error::DimensionOverflow { rows: bh as u64, cols: bw as u64 })?;
    let body = &buf[144..];
    if body.len() < n * 2 {
        return Err(Error::Truncated("coefficients"));
    }
    let coefs = body[..n * 2].chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
    Ok(CoefficientImage { blocks_high: bh, blocks_wide: bw, quant, coefs })
}
