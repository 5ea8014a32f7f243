//! Service configuration file (JSON). Path comes from `--config` or the
//! `FLOC_CONFIG` environment variable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use floc_core::decision::RuleConfig;

use crate::notify::SinkConfig;

pub const DEFAULT_COOLDOWN_SECS: u64 = 300;
pub const DEFAULT_MAX_LINE_LEN: usize = 512;
/// A canonical frame with a 32-char device id, u64 seq/timestamp, and
/// tank-scale sensor values stays under this; configs below it would
/// reject legal traffic.
pub const MIN_MAX_LINE_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// host:port the frame listener binds.
    pub listen: String,
    pub model_path: PathBuf,
    pub store_path: PathBuf,
    pub sinks: Vec<SinkConfig>,
    #[serde(default)]
    pub rules: RuleConfig,
    #[serde(default = "default_cooldown")]
    pub cooldown_secs: u64,
    #[serde(default = "default_max_line_len")]
    pub max_line_len: usize,
}

fn default_cooldown() -> u64 {
    DEFAULT_COOLDOWN_SECS
}

fn default_max_line_len() -> usize {
    DEFAULT_MAX_LINE_LEN
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<ServiceConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let config: ServiceConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen.is_empty() {
            return Err(ConfigError::Invalid("listen address is empty".to_string()));
        }
        if self.sinks.is_empty() {
            return Err(ConfigError::Invalid("at least one sink required".to_string()));
        }
        if self.max_line_len < MIN_MAX_LINE_LEN {
            return Err(ConfigError::Invalid(format!(
                "max_line_len {} below the longest legal frame ({MIN_MAX_LINE_LEN})",
                self.max_line_len
            )));
        }
        self.rules.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
