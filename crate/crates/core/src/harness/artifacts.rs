//! Output directory layout and provenance-stamped, atomic artifact writes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::io::write_atomic;
use crate::Provenance;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const SUBDIRS: [&str; 6] = ["manifests", "features", "detectors", "matrices", "curves", "reports"];
pub const INDEX_FILE: &str = "reports/artifacts.json";

/// JSON artifact envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactIndex {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub files: Vec<String>,
}

/// Writer rooted at an experiment output directory.
#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    provenance: Provenance,
    files: Vec<String>,
    stages: Vec<String>,
}

/// First line of every CSV artifact.
pub fn csv_stamp(p: &Provenance) -> String {
    format!("# config_hash={} seed={}\n", p.config_hash, p.seed)
}

/// Parses a CSV stamp line back into its provenance.
pub fn parse_csv_stamp(text: &str) -> Option<Provenance> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    let mut hash = None;
    let mut seed = None;
    for kv in line.split_whitespace() {
        match kv.split_once('=') {
            Some(("config_hash", v)) => hash = Some(v.to_string()),
            Some(("seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    Some(Provenance { config_hash: hash?, seed: seed? })
}

/// Drops the stamp line so the rest parses as plain CSV.
pub fn strip_csv_stamp(text: &str) -> &str {
    match text.strip_prefix("# ") {
        Some(_) => text.split_once('\n').map(|(_, rest)| rest).unwrap_or(""),
        None => text,
    }
}

impl Artifacts {
    pub fn create(root: impl Into<PathBuf>, provenance: Provenance) -> Result<Self> {
        let root = root.into();
        for sub in SUBDIRS {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self { root, provenance, files: Vec::new(), stages: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn record(&mut self, rel: &str) -> PathBuf {
        self.files.push(rel.to_string());
        self.root.join(rel)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, data: &T) -> Result<()> {
        let env = Stamped { schema_version: ARTIFACT_SCHEMA_VERSION, provenance: self.provenance.clone(), data };
        let path = self.record(rel);
        write_atomic(&path, serde_json::to_string_pretty(&env)?.as_bytes())
    }

    pub fn csv(&mut self, rel: &str, body: &[u8]) -> Result<()> {
        let mut bytes = csv_stamp(&self.provenance).into_bytes();
        bytes.extend_from_slice(body);
        let path = self.record(rel);
        write_atomic(&path, &bytes)
    }

    /// Binary payload plus a `.json` sidecar carrying the provenance.
    pub fn binary(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.record(rel);
        write_atomic(&path, bytes)?;
        self.json(&format!("{rel}.json"), &serde_json::json!({ "file": rel, "bytes": bytes.len() }))
    }

    /// Registers a file written by another module's writer.
    pub fn external(&mut self, rel: &str) -> PathBuf {
        self.record(rel)
    }

    pub fn stage_done(&mut self, stage: &str) -> Result<()> {
        self.stages.push(stage.to_string());
        self.write_index(None)
    }

    pub fn write_index(&mut self, failed: Option<&str>) -> Result<()> {
        let index = ArtifactIndex {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            provenance: self.provenance.clone(),
            completed_stages: self.stages.clone(),
            failed_stage: failed.map(str::to_string),
            files: self.files.clone(),
        };
        write_atomic(&self.root.join(INDEX_FILE), serde_json::to_string_pretty(&index)?.as_bytes())
    }
}
