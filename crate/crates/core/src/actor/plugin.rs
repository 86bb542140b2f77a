//! Named data-source loaders.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use thiserror::Error;

use crate::kb::KnowledgeBase;
use crate::synth::{generate, GeneratorConfig};
use crate::table::{load_csv, Table};

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub table: Table,
    pub kb: KnowledgeBase,
}

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("a loader named {0:?} is already registered")]
    Duplicate(String),
    #[error("no loader named {0:?}")]
    NotFound(String),
    #[error("loader {loader:?} failed: {message}")]
    Load { loader: String, message: String },
}

pub trait DataLoader: Send + Sync {
    /// Loads the dataset named by `source`, whose meaning is loader-specific.
    fn load(&self, source: &str) -> Result<LoadedDataset, PluginError>;
}

#[derive(Default, Clone)]
pub struct PluginRegistry {
    loaders: BTreeMap<String, Arc<dyn DataLoader>>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        PluginRegistry::default()
    }

    pub fn register(&mut self, name: &str, loader: Arc<dyn DataLoader>) -> Result<(), PluginError> {
        if self.loaders.contains_key(name) {
            return Err(PluginError::Duplicate(name.to_string()));
        }
        self.loaders.insert(name.to_string(), loader);
        Ok(())
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<dyn DataLoader>, PluginError> {
        self.loaders
            .get(name)
            .cloned()
            .ok_or_else(|| PluginError::NotFound(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.loaders.keys().map(String::as_str)
    }
}

/// Reads a CSV file against a fixed KB schema; `source` is the path.
pub struct CsvLoader {
    kb: KnowledgeBase,
}

impl CsvLoader {
    pub fn new(kb: KnowledgeBase) -> Self {
        CsvLoader { kb }
    }
}

impl DataLoader for CsvLoader {
    fn load(&self, source: &str) -> Result<LoadedDataset, PluginError> {
        let fail = |message: String| PluginError::Load {
            loader: "csv".into(),
            message,
        };
        let file = File::open(source).map_err(|e| fail(format!("{source}: {e}")))?;
        let table = load_csv(BufReader::new(file), &self.kb.schema).map_err(|e| fail(e.to_string()))?;
        Ok(LoadedDataset {
            table,
            kb: self.kb.clone(),
        })
    }
}

/// Generates the synthetic dataset; `source` is `SEED` or `SEED:ROWS`.
pub struct SyntheticLoader;

impl DataLoader for SyntheticLoader {
    fn load(&self, source: &str) -> Result<LoadedDataset, PluginError> {
        let fail = |message: String| PluginError::Load {
            loader: "synthetic".into(),
            message,
        };
        let config = parse_synthetic_source(source).map_err(fail)?;
        let d = generate(config).map_err(|e| fail(e.to_string()))?;
        Ok(LoadedDataset {
            table: d.table,
            kb: d.kb,
        })
    }
}

/// Parses `SEED[:ROWS]`.
pub fn parse_synthetic_source(source: &str) -> Result<GeneratorConfig, String> {
    let mut parts = source.splitn(2, ':');
    let seed = parts
        .next()
        .unwrap_or("")
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("expected SEED[:ROWS], got {source:?}"))?;
    let mut config = GeneratorConfig::with_seed(seed);
    if let Some(rows) = parts.next() {
        config.n_rows = rows
            .trim()
            .parse()
            .map_err(|_| format!("expected SEED[:ROWS], got {source:?}"))?;
    }
    Ok(config)
}
