use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::ClusteringConfig;
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::mapper::BeamConfig;
use crate::similarity::{Mode, SimilarityConfig};

/// All engine parameters. Missing sections and fields take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub filter: FilterConfig,
    pub clustering: ClusteringConfig,
    pub similarity: SimilarityConfig,
    pub beam: BeamConfig,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.clustering.validate()?;
        self.similarity.validate()?;
        self.beam.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EngineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Every failure, including I/O, is a config error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// Short stable digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization is infallible");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.similarity.mode = mode;
        self
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

/// Provenance attached to every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub engine: String,
    pub config_hash: String,
    pub mode: Mode,
}

impl RunMetadata {
    pub fn new(cfg: &EngineConfig) -> Self {
        RunMetadata {
            engine: format!("relmap {}", env!("CARGO_PKG_VERSION")),
            config_hash: cfg.hash(),
            mode: cfg.similarity.mode,
        }
    }

    /// Single-line form used as a comment header in CSV outputs.
    pub fn comment_line(&self) -> String {
        format!(
            "# engine={} config_hash={} mode={}",
            self.engine, self.config_hash, self.mode
        )
    }
}
