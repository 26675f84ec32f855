//! Run manifest: resolved config snapshot, seeds, per-stage artifact hashes
//! and timings. Written atomically (temp file + rename) after each stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ResolvedConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub duration_ms: u64,
    /// Artifact path (relative to the output directory) to SHA-256 hex.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: String,
    pub config: ResolvedConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

impl Manifest {
    pub fn new(config: ResolvedConfig) -> Manifest {
        Manifest {
            schema_version: 1,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            stages: BTreeMap::new(),
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join(MANIFEST_FILE)
    }

    pub fn load(out_dir: &Path) -> CliResult<Manifest> {
        let path = Self::path(out_dir);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Data(format!(
                "no manifest at {}; run earlier stages first ({e})",
                path.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("corrupt manifest: {e}")))
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn store(&self, out_dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("cannot serialize manifest: {e}")))?;
        let temp = out_dir.join(".manifest.json.tmp");
        std::fs::write(&temp, json)?;
        std::fs::rename(&temp, Self::path(out_dir))?;
        Ok(())
    }

    /// Records a completed stage, hashing the named artifacts.
    pub fn record_stage(
        &mut self,
        out_dir: &Path,
        stage: &str,
        duration_ms: u64,
        artifacts: &[&str],
    ) -> CliResult<()> {
        let mut hashes = BTreeMap::new();
        for name in artifacts {
            hashes.insert(name.to_string(), hash_file(&out_dir.join(name))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                duration_ms,
                artifacts: hashes,
            },
        );
        self.store(out_dir)
    }

    /// Fails fast unless `stage` completed earlier.
    pub fn require_stage(&self, stage: &str) -> CliResult<&StageRecord> {
        self.stages.get(stage).ok_or_else(|| {
            CliError::Data(format!("stage '{stage}' has not run; run it first"))
        })
    }

    /// Recomputes an artifact's hash and compares it with the recorded one.
    pub fn verify_artifact(&self, out_dir: &Path, stage: &str, name: &str) -> CliResult<()> {
        let record = self.require_stage(stage)?;
        let recorded = record.artifacts.get(name).ok_or_else(|| {
            CliError::Data(format!("stage '{stage}' did not record artifact '{name}'"))
        })?;
        let current = hash_file(&out_dir.join(name))?;
        if &current != recorded {
            return Err(CliError::Data(format!(
                "artifact '{name}' changed since stage '{stage}' ran \
                 (recorded {recorded}, found {current})"
            )));
        }
        Ok(())
    }
}
