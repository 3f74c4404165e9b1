//! Detector files: a JSON header next to a little-endian f64 weight array.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::detector::LinearDetector;
use crate::error::{Error, Result};
use crate::features::io::write_atomic;
use crate::{Provenance, SourceId};

pub const DETECTOR_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorHeader {
    pub schema_version: u32,
    pub trained_on: SourceId,
    pub reg: f64,
    pub d: usize,
    pub bias: f64,
    pub threshold: f64,
    pub low_confidence: bool,
    pub weights_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("weights"))
}

pub fn write_detector(det: &LinearDetector, stem: impl AsRef<Path>, provenance: Option<&Provenance>) -> Result<()> {
    det.validate()?;
    let (json, bin) = paths(stem.as_ref());
    let header = DetectorHeader {
        schema_version: DETECTOR_SCHEMA_VERSION,
        trained_on: det.trained_on,
        reg: det.reg,
        d: det.d(),
        bias: det.bias,
        threshold: det.threshold,
        low_confidence: det.low_confidence,
        weights_file: bin.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        provenance: provenance.cloned(),
    };
    let bytes: Vec<u8> = det.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    write_atomic(&bin, &bytes)?;
    write_atomic(&json, serde_json::to_string_pretty(&header)?.as_bytes())
}

pub fn read_detector(stem: impl AsRef<Path>) -> Result<(LinearDetector, DetectorHeader)> {
    let (json, bin) = paths(stem.as_ref());
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let header: DetectorHeader = serde_json::from_str(&text)?;
    if header.schema_version != DETECTOR_SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion(header.schema_version));
    }
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != header.d * 8 {
        return Err(Error::Truncated("detector weights"));
    }
    let weights = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let det = LinearDetector {
        weights,
        bias: header.bias,
        threshold: header.threshold,
        trained_on: header.trained_on,
        reg: header.reg,
        low_confidence: header.low_confidence,
    };
    det.validate()?;
    Ok((det, header))
}
