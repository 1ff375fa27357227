use std::fs;
use std::path::{Path, PathBuf};

use maasim_core::{Error, Result};

/// Server settings. Read from a `key = value` file, then overridden by
/// environment variables with the upper-cased key (`PORT`, `MODEL_PATH`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub model_path: PathBuf,
    pub dataset_path: PathBuf,
    pub catalog_path: PathBuf,
    /// Group weights file; computed from the dataset when absent.
    pub groups_path: Option<PathBuf>,
    /// Indicator schema applied to the dataset before weights are computed.
    pub schema_path: Option<PathBuf>,
    pub max_evaluations: usize,
    pub optimize_timeout_secs: u64,
    /// Allowed browser origin; `*` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            model_path: "model.json".into(),
            dataset_path: "dataset.csv".into(),
            catalog_path: "catalog.json".into(),
            groups_path: None,
            schema_path: None,
            max_evaluations: 20_000,
            optimize_timeout_secs: 60,
            cors_origin: None,
        }
    }
}

const KEYS: [&str; 10] = [
    "host",
    "port",
    "model_path",
    "dataset_path",
    "catalog_path",
    "groups_path",
    "schema_path",
    "max_evaluations",
    "optimize_timeout_secs",
    "cors_origin",
];

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not a valid number")))
}

impl ServiceConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "host" => self.host = v.to_string(),
            "port" => self.port = number(key, v)?,
            "model_path" => self.model_path = v.into(),
            "dataset_path" => self.dataset_path = v.into(),
            "catalog_path" => self.catalog_path = v.into(),
            "groups_path" => self.groups_path = (!v.is_empty()).then(|| v.into()),
            "schema_path" => self.schema_path = (!v.is_empty()).then(|| v.into()),
            "max_evaluations" => self.max_evaluations = number(key, v)?,
            "optimize_timeout_secs" => self.optimize_timeout_secs = number(key, v)?,
            "cors_origin" => self.cors_origin = (!v.is_empty()).then(|| v.to_string()),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ServiceConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies overrides from `lookup`, normally the process environment.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            if let Some(v) = lookup(&key.to_ascii_uppercase()) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    pub fn from_env(file: Option<&Path>) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }
}
