//! Run manifests: what was run, with which resolved settings, and what it
//! produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pucl_core::digest::{json_digest, sha256_hex};
use pucl_core::{Error, Result, RNG_ALGORITHM};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Everything that determines a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub command: String,
    pub config: ExperimentConfig,
    /// Command-specific flags after defaults are applied.
    pub options: serde_json::Value,
    /// SHA-256 of every input file, keyed by path.
    pub input_digests: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub rng_algorithm: String,
    pub config_digest: String,
    pub run: ResolvedRun,
    pub outputs: BTreeMap<String, PathBuf>,
    /// Parameter digests of written checkpoints.
    pub checkpoint_digests: BTreeMap<String, String>,
    pub summary: serde_json::Value,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ResolvedRun {
    pub fn new(command: &str, config: &ExperimentConfig, options: serde_json::Value, inputs: &[PathBuf]) -> Result<Self> {
        let mut input_digests = BTreeMap::new();
        for p in inputs {
            let bytes = fs::read(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            input_digests.insert(p.display().to_string(), sha256_hex(&bytes));
        }
        Ok(Self {
            command: command.to_owned(),
            config: config.clone(),
            options,
            input_digests,
        })
    }

    pub fn digest(&self) -> Result<String> {
        json_digest(self)
    }
}

impl RunManifest {
    pub fn new(run: ResolvedRun) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            rng_algorithm: RNG_ALGORITHM.to_owned(),
            config_digest: run.digest()?,
            run,
            outputs: BTreeMap::new(),
            checkpoint_digests: BTreeMap::new(),
            summary: serde_json::Value::Null,
            timings_ms: BTreeMap::new(),
        })
    }

    /// Recompute the run digest, including the current bytes of every input
    /// file, and compare it with the stored one.
    pub fn verify(&self) -> Result<()> {
        let inputs: Vec<PathBuf> = self.run.input_digests.keys().map(PathBuf::from).collect();
        let fresh = ResolvedRun::new(&self.run.command, &self.run.config, self.run.options.clone(), &inputs)?;
        let digest = fresh.digest()?;
        if digest != self.config_digest {
            return Err(Error::Integrity(format!(
                "manifest digest {} does not match recomputed {digest}",
                self.config_digest
            )));
        }
        Ok(())
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}_manifest.json")
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.run.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))? + "\n";
        fs::write(&path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
