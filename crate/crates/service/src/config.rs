//! Service configuration file (TOML).
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1:8080"
//!
//! [storage]
//! path = "forge.db"        # ":memory:" keeps everything in memory
//!
//! [providers]
//! mode = "mock"            # or "live"; live reads FORGE_* variables
//! fixture_dir = "fixtures" # optional, mock mode only
//!
//! [limits]
//! workers = 2
//! image_concurrency = 4
//! max_attempts = 3
//!
//! [pipeline]
//! translate = false
//! target_language = "ko"
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub path: PathBuf,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("forge.db") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub fixture_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub workers: usize,
    pub image_concurrency: usize,
    pub max_attempts: u32,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { workers: 2, image_concurrency: 4, max_attempts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub translate: bool,
    pub target_language: String,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { translate: false, target_language: "ko".into(), seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub server: ServerConfig,
    pub storage: StorageConfig,
    pub providers: ProviderConfig,
    pub limits: LimitsConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn parse(raw: &str) -> Result<Self, ConfigError> {
        let c: ServiceConfig = toml::from_str(raw)?;
        if c.limits.workers == 0 || c.limits.image_concurrency == 0 || c.limits.max_attempts == 0 {
            return Err(ConfigError::Invalid("limits must be at least 1".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::parse(&raw)
    }

    /// In-memory storage and mock providers.
    pub fn for_tests() -> Self {
        Self { storage: StorageConfig { path: PathBuf::from(":memory:") }, ..Self::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = ServiceConfig::parse("[limits]\nworkers = 3\n").unwrap();
        assert_eq!(c.limits.workers, 3);
        assert_eq!(c.limits.image_concurrency, 4);
        assert_eq!(c.providers.mode, ProviderMode::Mock);
    }

    #[test]
    fn unknown_keys_and_zero_limits_are_errors() {
        assert!(ServiceConfig::parse("[server]\nport = 1\n").is_err());
        assert!(ServiceConfig::parse("[limits]\nworkers = 0\n").is_err());
    }
}
