//! Parametric image-development simulator.
//!
//! A source is defined by the parameters of a fixed pipeline applied to
//! high-resolution grayscale inputs:
//!
//! ```text
//! gaussian denoise → resize → unsharp mask → smart crop → JPEG round trip
//! ```
//!
//! Intermediate stages run on real-valued planes clamped to [0, 255] after
//! each stage; pixels are rounded once, at JPEG input.

mod crop;
mod filters;
mod jpeg;
mod params;
mod synth;
mod universe;

pub use crop::{smart_crop, smart_crop_origin};
pub use filters::{gaussian_blur, resize, unsharp_mask};
pub use jpeg::{
    decode_coefficients, decompress, encode_coefficients, jpeg_roundtrip, quant_table, CoefficientImage,
    BASE_LUMINANCE_TABLE,
};
pub use params::{PipelineParams, ResizeKernel};
pub use synth::{synth_raw, synth_raw_with_exponent, MIN_RAW_SIZE};
pub use universe::{build_universe, SourceManifest, UniverseGrid, MANIFEST_SCHEMA_VERSION};

use crate::error::Result;
use crate::image::GrayImage;

/// A developed cover: the decompressed pixels and the quantized DCT blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Developed {
    pub image: GrayImage,
    pub coefficients: CoefficientImage,
}

/// Runs the full pipeline on one input image.
pub fn develop(input: &GrayImage, params: &PipelineParams) -> Result<Developed> {
    params.validate_for_input(input.height().min(input.width()))?;
    let mut plane = input.to_plane();
    plane = gaussian_blur(&plane, params.denoise_sigma);
    plane.clamp_to_u8_range();
    plane = resize(&plane, params.resize_factor, params.resize_kernel);
    plane.clamp_to_u8_range();
    plane = unsharp_mask(&plane, params.sharpen_amount, params.sharpen_radius);
    plane.clamp_to_u8_range();
    let cropped = crop::smart_crop_plane(&plane, params.crop_size)?;
    let (image, coefficients) = jpeg_roundtrip(&cropped.to_gray(), params.jpeg_qf)?;
    Ok(Developed { image, coefficients })
}
