use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use geocircle_core::api::ApiDefaults;
use geocircle_core::model::{ScaleMethod, ScalingSpec};
use geocircle_core::spatial::cluster::DEFAULT_PIXEL_RADIUS;
use serde::Deserialize;
use thiserror::Error;

pub const ENV_LISTEN: &str = "GEOCIRCLE_LISTEN";
pub const ENV_DATA_DIR: &str = "GEOCIRCLE_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid listen address `{0}` (expected host:port with port 1-65535)")]
    Listen(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub method: ScaleMethod,
    pub base_radius_px: f64,
    pub user_factor: f64,
    pub r_min_px: f64,
    pub r_max_px: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        let d = ScalingSpec::default();
        ScalingConfig {
            method: d.method,
            base_radius_px: d.base_radius_px,
            user_factor: d.user_factor,
            r_min_px: d.r_min_px,
            r_max_px: d.r_max_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub pixel_radius: f64,
    pub max_markers: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            pixel_radius: DEFAULT_PIXEL_RADIUS,
            max_markers: None,
        }
    }
}

/// Service configuration, read from TOML:
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// data_dir = "data"
/// refresh_secs = 300        # 0 disables reloading
/// cors_allow = ["http://localhost:5173"]
///
/// [scaling]
/// method = "flannery"       # linear | log | flannery
/// base_radius_px = 40.0
/// user_factor = 1.0
/// r_min_px = 2.0
/// r_max_px = 120.0
///
/// [cluster]
/// pixel_radius = 60.0
/// max_markers = 200
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub refresh_secs: u64,
    pub cors_allow: Vec<String>,
    pub scaling: ScalingConfig,
    pub cluster: ClusterConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            refresh_secs: 0,
            cors_allow: Vec::new(),
            scaling: ScalingConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`; a relative `data_dir` is resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        if config.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.data_dir = parent.join(&config.data_dir);
            }
        }
        Ok(config)
    }

    /// Applies `GEOCIRCLE_LISTEN` and `GEOCIRCLE_DATA_DIR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(listen) = lookup(ENV_LISTEN) {
            self.listen = listen;
        }
        if let Some(dir) = lookup(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(dir);
        }
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        let addr: SocketAddr = self.listen.parse().map_err(|_| ConfigError::Listen(self.listen.clone()))?;
        if addr.port() == 0 {
            return Err(ConfigError::Listen(self.listen.clone()));
        }
        Ok(addr)
    }

    pub fn scaling_spec(&self) -> ScalingSpec {
        let s = &self.scaling;
        ScalingSpec {
            method: s.method,
            base_radius_px: s.base_radius_px,
            reference_value: 1.0,
            user_factor: s.user_factor,
            r_min_px: s.r_min_px,
            r_max_px: s.r_max_px,
        }
    }

    pub fn api_defaults(&self) -> ApiDefaults {
        ApiDefaults {
            scaling: self.scaling_spec(),
            pixel_radius: self.cluster.pixel_radius,
            max_markers: self.cluster.max_markers,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        self.scaling_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.cluster.pixel_radius >= 0.0 && self.cluster.pixel_radius.is_finite()) {
            return Err(ConfigError::Invalid("cluster.pixel_radius must be a non-negative number".into()));
        }
        if self.cluster.max_markers == Some(0) {
            return Err(ConfigError::Invalid("cluster.max_markers must be at least 1".into()));
        }
        Ok(())
    }
}
