use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeKernel {
    Nearest,
    Bilinear,
    Bicubic,
    Lanczos3,
}

impl ResizeKernel {
    pub const ALL: [ResizeKernel; 4] =
        [ResizeKernel::Nearest, ResizeKernel::Bilinear, ResizeKernel::Bicubic, ResizeKernel::Lanczos3];

    pub fn as_str(self) -> &'static str {
        match self {
            ResizeKernel::Nearest => "nearest",
            ResizeKernel::Bilinear => "bilinear",
            ResizeKernel::Bicubic => "bicubic",
            ResizeKernel::Lanczos3 => "lanczos3",
        }
    }
}

/// Development pipeline parameters (one point ω of the pipeline space).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Gaussian blur standard deviation in pixels; 0 disables denoising.
    pub denoise_sigma: f64,
    /// Scale factor in (0, 1].
    pub resize_factor: f64,
    pub resize_kernel: ResizeKernel,
    /// Unsharp-mask gain; 0 disables sharpening.
    pub sharpen_amount: f64,
    pub sharpen_radius: f64,
    /// Side of the square crop, a multiple of 8 and at least 16.
    pub crop_size: usize,
    pub jpeg_qf: u8,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            denoise_sigma: 0.0,
            resize_factor: 1.0,
            resize_kernel: ResizeKernel::Bilinear,
            sharpen_amount: 0.0,
            sharpen_radius: 1.0,
            crop_size: 64,
            jpeg_qf: 85,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.denoise_sigma >= 0.0 && self.denoise_sigma.is_finite()) {
            return bad(format!("denoise_sigma must be >= 0, got {}", self.denoise_sigma));
        }
        if !(self.resize_factor > 0.0 && self.resize_factor <= 1.0) {
            return bad(format!("resize_factor must be in (0, 1], got {}", self.resize_factor));
        }
        if !(self.sharpen_amount >= 0.0 && self.sharpen_amount.is_finite()) {
            return bad(format!("sharpen_amount must be >= 0, got {}", self.sharpen_amount));
        }
        if !(self.sharpen_radius > 0.0 && self.sharpen_radius.is_finite()) {
            return bad(format!("sharpen_radius must be > 0, got {}", self.sharpen_radius));
        }
        if self.crop_size < 16 || self.crop_size % 8 != 0 {
            return bad(format!("crop_size must be a multiple of 8 and >= 16, got {}", self.crop_size));
        }
        if !(1..=100).contains(&self.jpeg_qf) {
            return bad(format!("jpeg_qf must be in [1, 100], got {}", self.jpeg_qf));
        }
        Ok(())
    }

    /// Also checks that the resized input still holds the crop.
    pub fn validate_for_input(&self, input_min_dim: usize) -> Result<()> {
        self.validate()?;
        let resized = (input_min_dim as f64 * self.resize_factor).round() as usize;
        if resized < self.crop_size {
            return Err(Error::InvalidParameter(format!(
                "resize_factor {} leaves {resized} px, less than crop_size {}",
                self.resize_factor, self.crop_size
            )));
        }
        Ok(())
    }
}
