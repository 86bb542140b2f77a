//! Service and CLI configuration: a TOML file plus `TABPLAN_*` environment
//! overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{BackendConfig, BackendKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Runs and bench sweeps executing at once.
    pub workers: usize,
    /// Result rows kept inside a run record.
    pub max_result_rows: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            workers: 4,
            max_result_rows: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendConfig,
    pub service: ServiceConfig,
    /// KB name to KB document path. `synthetic` is always available.
    pub knowledge_bases: BTreeMap<String, PathBuf>,
    /// Suite name to suite document path. `default` is always available.
    pub suites: BTreeMap<String, PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File {
            path: "<config>".into(),
            message: e.to_string(),
        })
    }

    /// Reads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| ConfigError::File {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                let mut c: Config = toml::from_str(&text).map_err(|e| ConfigError::File {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                c.resolve_relative(p.parent().unwrap_or(Path::new(".")));
                c
            }
            None => Config::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        config.check()?;
        Ok(config)
    }

    /// Paths in the file are relative to the file's directory.
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.service.data_dir);
        if let Some(f) = self.backend.fixtures.as_mut() {
            fix(f);
        }
        self.knowledge_bases.values_mut().for_each(fix);
        self.suites.values_mut().for_each(fix);
    }

    /// Applies `TABPLAN_PORT`, `TABPLAN_BIND`, `TABPLAN_DATA_DIR`,
    /// `TABPLAN_WORKERS`, `TABPLAN_BACKEND`, `TABPLAN_ENDPOINT`,
    /// `TABPLAN_MODEL`, `TABPLAN_CREDENTIAL_ENV` and `TABPLAN_FIXTURES`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &str, raw: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            raw.trim().parse().map_err(|e: T::Err| ConfigError::Env {
                name: name.into(),
                message: e.to_string(),
            })
        }
        if let Some(v) = get("TABPLAN_PORT") {
            self.service.port = parsed("TABPLAN_PORT", v)?;
        }
        if let Some(v) = get("TABPLAN_BIND") {
            self.service.bind = v;
        }
        if let Some(v) = get("TABPLAN_DATA_DIR") {
            self.service.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("TABPLAN_WORKERS") {
            self.service.workers = parsed("TABPLAN_WORKERS", v)?;
        }
        if let Some(v) = get("TABPLAN_BACKEND") {
            self.backend.kind = match v.trim() {
                "http" => BackendKind::Http,
                "scripted" => BackendKind::Scripted,
                other => {
                    return Err(ConfigError::Env {
                        name: "TABPLAN_BACKEND".into(),
                        message: format!("expected http or scripted, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = get("TABPLAN_ENDPOINT") {
            self.backend.endpoint = Some(v);
        }
        if let Some(v) = get("TABPLAN_MODEL") {
            self.backend.model = v;
        }
        if let Some(v) = get("TABPLAN_CREDENTIAL_ENV") {
            self.backend.credential_env = Some(v);
        }
        if let Some(v) = get("TABPLAN_FIXTURES") {
            self.backend.fixtures = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.service.workers == 0 {
            return Err(ConfigError::Invalid("service.workers must be at least 1".into()));
        }
        if self.service.max_result_rows == 0 {
            return Err(ConfigError::Invalid(
                "service.max_result_rows must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_sections_and_env_overrides() {
        let mut c = Config::from_toml(
            r#"
            [backend]
            kind = "http"
            endpoint = "http://localhost:9/v1/chat/completions"
            credential_env = "LLM_KEY"

            [service]
            port = 9000
            workers = 2

            [knowledge_bases]
            fleet = "kb/fleet.json"
            "#,
        )
        .unwrap();
        assert_eq!(c.backend.kind, BackendKind::Http);
        assert_eq!(c.service.port, 9000);
        assert_eq!(c.service.max_result_rows, 1000);
        c.apply_env(|n| match n {
            "TABPLAN_PORT" => Some("9100".into()),
            "TABPLAN_BACKEND" => Some("scripted".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.service.port, 9100);
        assert_eq!(c.backend.kind, BackendKind::Scripted);
        assert!(c.knowledge_bases.contains_key("fleet"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_env() {
        assert!(Config::from_toml("[service]\nthreads = 3\n").is_err());
        let mut c = Config::default();
        assert!(c
            .apply_env(|n| (n == "TABPLAN_PORT").then(|| "high".into()))
            .is_err());
        c.service.workers = 0;
        assert!(c.check().is_err());
    }
}
