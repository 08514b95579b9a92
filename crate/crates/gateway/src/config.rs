//! Service configuration: TOML file, then `NOTEBAR_*` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use notebar_core::orchestrator::{ArtifactRules, FeedbackPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientSettings {
    /// Chat-completions style endpoint; unset means the offline stub.
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model: String,
    pub timeout_secs: u64,
    pub seed: u64,
}

impl Default for ClientSettings {
    fn default() -> Self {
        ClientSettings {
            endpoint: None,
            api_key_env: "NOTEBAR_API_KEY".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 60,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Vault snapshot file; `None` keeps the vault in memory.
    pub vault_path: Option<PathBuf>,
    /// Router model file. Loaded at start when present; training writes it.
    pub model_path: Option<PathBuf>,
    /// Feedback ledger; `None` keeps it in memory.
    pub ledger_path: Option<PathBuf>,
    /// Corpus (own format or mapped external) loaded as the working dataset.
    pub dataset_path: Option<PathBuf>,
    pub mapping_path: Option<PathBuf>,
    pub k: usize,
    pub feedback: FeedbackPolicy,
    pub artifacts: ArtifactRules,
    pub client: ClientSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8787)),
            vault_path: None,
            model_path: None,
            ledger_path: None,
            dataset_path: None,
            mapping_path: None,
            k: 5,
            feedback: FeedbackPolicy::default(),
            artifacts: ArtifactRules::default(),
            client: ClientSettings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("environment variable {name}: {reason}")]
    Env { name: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Apply overrides from `lookup` (normally `std::env::var`).
    pub fn with_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        fn parse<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| ConfigError::Env {
                name: name.into(),
                reason: e.to_string(),
            })
        }
        if let Some(v) = lookup("NOTEBAR_BIND") {
            self.bind = parse("NOTEBAR_BIND", &v)?;
        }
        if let Some(v) = lookup("NOTEBAR_K") {
            self.k = parse("NOTEBAR_K", &v)?;
        }
        let paths: [(&str, &mut Option<PathBuf>); 5] = [
            ("NOTEBAR_VAULT", &mut self.vault_path),
            ("NOTEBAR_MODEL", &mut self.model_path),
            ("NOTEBAR_LEDGER", &mut self.ledger_path),
            ("NOTEBAR_DATASET", &mut self.dataset_path),
            ("NOTEBAR_MAPPING", &mut self.mapping_path),
        ];
        for (name, slot) in paths {
            if let Some(v) = lookup(name) {
                *slot = (!v.is_empty()).then(|| PathBuf::from(v));
            }
        }
        if let Some(v) = lookup("NOTEBAR_CLIENT_ENDPOINT") {
            self.client.endpoint = (!v.is_empty()).then_some(v);
        }
        if let Some(v) = lookup("NOTEBAR_FEEDBACK_DELTA") {
            self.feedback.delta = parse("NOTEBAR_FEEDBACK_DELTA", &v)?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        self.feedback
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for p in [&self.vault_path, &self.model_path, &self.ledger_path]
            .into_iter()
            .flatten()
        {
            let dir = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(ConfigError::Invalid(format!(
                    "directory of {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        let cfg = base.with_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }
}
