//! Versioned experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::devsim::UniverseGrid;
use crate::error::{Error, Result};
use crate::features::DctrConfig;
use crate::optimize::{AnnealConfig, ParamBounds};
use crate::stegodet::{DetectorConfig, EmbedConfig};
use crate::subspace::DEFAULT_VARIANCE_THRESHOLD;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Cover/stego balance of an operational set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CoversOnly,
    StegosOnly,
    #[serde(rename = "mixed_50_50")]
    Mixed5050,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::CoversOnly, Scenario::StegosOnly, Scenario::Mixed5050];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::CoversOnly => "covers_only",
            Scenario::StegosOnly => "stegos_only",
            Scenario::Mixed5050 => "mixed_50_50",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealCampaign {
    /// Number of highest-regret (source, target) pairs to optimize.
    pub scenarios: usize,
    pub config: AnnealConfig,
    pub bounds: ParamBounds,
    /// Raw inputs available to the objective; at least `config.batch_size`.
    pub pool_size: usize,
}

impl Default for AnnealCampaign {
    fn default() -> Self {
        Self { scenarios: 50, config: AnnealConfig::default(), bounds: ParamBounds::default(), pool_size: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub grid: UniverseGrid,
    /// Side of the synthetic raw inputs.
    pub raw_size: usize,
    /// Raw inputs per source for training (each yields a cover and a stego).
    pub n_train: usize,
    pub n_eval: usize,
    pub n_operational: usize,
    pub embed: EmbedConfig,
    pub detector: DetectorConfig,
    /// Defaults to the quantization step matching the grid's JPEG quality.
    #[serde(default)]
    pub dctr: Option<DctrConfig>,
    pub variance_threshold: f64,
    pub regret_threshold: f64,
    pub decile: f64,
    pub window: f64,
    pub scenarios: Vec<Scenario>,
    pub sample_sizes: Vec<usize>,
    #[serde(default)]
    pub anneal: Option<AnnealCampaign>,
    /// Not part of the config hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 1,
            grid: UniverseGrid::desk(),
            raw_size: 128,
            n_train: 200,
            n_eval: 200,
            n_operational: 200,
            embed: EmbedConfig::default(),
            detector: DetectorConfig::default(),
            dctr: None,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            regret_threshold: 0.05,
            decile: 0.10,
            window: 0.3,
            scenarios: Scenario::ALL.to_vec(),
            sample_sizes: vec![10, 100, 200],
            anneal: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config file {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dctr(&self) -> DctrConfig {
        self.dctr.unwrap_or_else(|| DctrConfig::for_quality(self.grid.jpeg_qf))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("unsupported config schema_version {}", self.schema_version));
        }
        if self.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for p in self.grid.combinations() {
            p.validate_for_input(self.raw_size).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.raw_size < crate::devsim::MIN_RAW_SIZE {
            return bad(format!("raw_size must be >= {}", crate::devsim::MIN_RAW_SIZE));
        }
        if self.n_train < 2 || self.n_eval < 1 || self.n_operational < 2 {
            return bad("n_train, n_operational must be >= 2 and n_eval >= 1".into());
        }
        if self.scenarios.is_empty() {
            return bad("scenarios must be nonempty".into());
        }
        if let Some(&s) = self.sample_sizes.iter().find(|&&s| s < 2 || s > self.n_operational) {
            return bad(format!("sample size {s} outside [2, n_operational = {}]", self.n_operational));
        }
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return bad("variance_threshold must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.decile) || !(self.window > 0.0) {
            return bad("decile must be in [0, 1] and window > 0".into());
        }
        self.embed.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.detector.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.dctr().validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(a) = &self.anneal {
            a.config.validate().map_err(|e| Error::Config(e.to_string()))?;
            a.bounds.validate().map_err(|e| Error::Config(e.to_string()))?;
            if a.pool_size < a.config.batch_size {
                return bad("anneal pool_size must be >= batch_size".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn provenance(&self) -> crate::Provenance {
        crate::Provenance { config_hash: self.hash(), seed: self.seed }
    }
}
