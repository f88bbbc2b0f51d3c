//! TOML configuration for the federation: keystore location, credential,
//! agency registry, and query defaults, with environment overrides for the
//! credential and per-agency endpoints.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use he_core::ParamsProfile;

use crate::federator::{AgencyEndpoint, Registry, DEFAULT_THRESHOLD};

pub const CREDENTIAL_ENV: &str = "FEDSEARCH_CREDENTIAL";
pub const ENDPOINT_ENV_PREFIX: &str = "FEDSEARCH_ENDPOINT_";
pub const DEFAULT_TIMEOUT_MS: u64 = 120_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("unknown params profile {0:?}")]
    UnknownProfile(String),

    #[error("duplicate agency id {0:?}")]
    DuplicateAgency(String),

    #[error("config lists no agencies")]
    NoAgencies,

    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    keystore: PathBuf,
    #[serde(default)]
    credential: String,
    federation_key_id: u64,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default = "default_timeout_ms")]
    timeout_ms: u64,
    #[serde(default = "default_ckks_profile")]
    ckks_profile: String,
    #[serde(default = "default_bfv_profile")]
    bfv_profile: String,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(rename = "agencies")]
    agencies: Vec<RawAgency>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgency {
    id: String,
    endpoint: String,
    store: PathBuf,
    bfv_key_id: u64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_ckks_profile() -> String {
    "ckks_default".to_string()
}

fn default_bfv_profile() -> String {
    "bfv_default".to_string()
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct AgencyConfig {
    pub id: String,
    pub endpoint: String,
    pub store: PathBuf,
    pub bfv_key_id: u64,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub keystore: PathBuf,
    pub credential: String,
    pub federation_key_id: u64,
    pub threshold: f64,
    pub timeout: Duration,
    pub ckks_profile: ParamsProfile,
    pub bfv_profile: ParamsProfile,
    pub parallelism: usize,
    pub agencies: Vec<AgencyConfig>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parse TOML, then layer on `FEDSEARCH_CREDENTIAL` and
    /// `FEDSEARCH_ENDPOINT_<ID>` (agency id uppercased, `-` → `_`).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        if raw.agencies.is_empty() {
            return Err(ConfigError::NoAgencies);
        }
        if !(raw.threshold > 0.0) {
            return Err(ConfigError::BadThreshold(raw.threshold));
        }
        let ckks_profile = ParamsProfile::parse(&raw.ckks_profile)
            .ok_or_else(|| ConfigError::UnknownProfile(raw.ckks_profile.clone()))?;
        let bfv_profile = ParamsProfile::parse(&raw.bfv_profile)
            .ok_or_else(|| ConfigError::UnknownProfile(raw.bfv_profile.clone()))?;

        let mut seen = std::collections::BTreeSet::new();
        let mut agencies = Vec::with_capacity(raw.agencies.len());
        for a in raw.agencies {
            if !seen.insert(a.id.clone()) {
                return Err(ConfigError::DuplicateAgency(a.id));
            }
            let endpoint = std::env::var(endpoint_env_var(&a.id)).unwrap_or(a.endpoint);
            agencies.push(AgencyConfig {
                id: a.id,
                endpoint,
                store: a.store,
                bfv_key_id: a.bfv_key_id,
            });
        }

        let credential = std::env::var(CREDENTIAL_ENV).unwrap_or(raw.credential);

        Ok(Config {
            keystore: raw.keystore,
            credential,
            federation_key_id: raw.federation_key_id,
            threshold: raw.threshold,
            timeout: Duration::from_millis(raw.timeout_ms),
            ckks_profile,
            bfv_profile,
            parallelism: raw.parallelism.max(1),
            agencies,
        })
    }

    pub fn registry(&self) -> Registry {
        Registry {
            agencies: self
                .agencies
                .iter()
                .map(|a| AgencyEndpoint {
                    agency_id: a.id.clone(),
                    endpoint: a.endpoint.clone(),
                    bfv_key_id: a.bfv_key_id,
                })
                .collect(),
            federation_ckks_key_id: self.federation_key_id,
        }
    }

    pub fn agency(&self, id: &str) -> Option<&AgencyConfig> {
        self.agencies.iter().find(|a| a.id == id)
    }
}

pub fn endpoint_env_var(agency_id: &str) -> String {
    format!(
        "{}{}",
        ENDPOINT_ENV_PREFIX,
        agency_id.to_ascii_uppercase().replace('-', "_")
    )
}
