use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::records::Keyed;
use crate::actor::{CsvLoader, DataLoader, LoadedDataset, PluginRegistry};
use crate::kb::KnowledgeBase;

/// Append-only NDJSON log. Each line is a full snapshot; the last line for
/// a key is its current state.
pub(crate) struct RecordLog<T> {
    state: Mutex<LogState<T>>,
}

struct LogState<T> {
    file: File,
    latest: HashMap<String, T>,
    /// Keys in order of first appearance.
    order: Vec<String>,
}

impl<T: Keyed + Clone + Serialize + DeserializeOwned> RecordLog<T> {
    /// Replays `path`, skipping lines that do not parse (a torn final write).
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut latest = HashMap::new();
        let mut order = Vec::new();
        let mut torn_tail = false;
        if path.exists() {
            let text = fs::read_to_string(path)?;
            torn_tail = !text.is_empty() && !text.ends_with('\n');
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<T>(line) {
                    Ok(record) => {
                        let key = record.key().to_string();
                        if !latest.contains_key(&key) {
                            order.push(key.clone());
                        }
                        latest.insert(key, record);
                    }
                    Err(e) => log::warn!("{}:{}: skipping record: {e}", path.display(), n + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn_tail {
            file.write_all(b"\n")?;
        }
        Ok(RecordLog {
            state: Mutex::new(LogState { file, latest, order }),
        })
    }

    pub fn put(&self, record: &T) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut state = self.state.lock().expect("record log lock");
        state.file.write_all(line.as_bytes())?;
        state.file.flush()?;
        let key = record.key().to_string();
        if !state.latest.contains_key(&key) {
            state.order.push(key.clone());
        }
        state.latest.insert(key, record.clone());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<T> {
        self.state
            .lock()
            .expect("record log lock")
            .latest
            .get(key)
            .cloned()
    }

    /// Current records, newest first.
    pub fn newest_first(&self) -> Vec<T> {
        let state = self.state.lock().expect("record log lock");
        state
            .order
            .iter()
            .rev()
            .filter_map(|k| state.latest.get(k).cloned())
            .collect()
    }

    pub fn sync(&self) -> io::Result<()> {
        self.state.lock().expect("record log lock").file.sync_all()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetOrigin {
    /// An uploaded CSV, stored as `<id>.csv` next to the metadata.
    Csv,
    Loader {
        loader: String,
        source: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dataset_id: String,
    pub kb: String,
    pub origin: DatasetOrigin,
    pub rows: usize,
    pub columns: usize,
    pub created_at: String,
}

/// Content-addressed id: the first 16 hex digits of a SHA-256 digest.
pub fn content_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

pub(crate) struct DatasetStore {
    dir: PathBuf,
    metas: Mutex<BTreeMap<String, DatasetMeta>>,
    cache: Mutex<HashMap<String, Arc<LoadedDataset>>>,
}

impl DatasetStore {
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut metas = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                match serde_json::from_slice::<DatasetMeta>(&fs::read(&path)?) {
                    Ok(m) => {
                        metas.insert(m.dataset_id.clone(), m);
                    }
                    Err(e) => log::warn!("{}: skipping dataset: {e}", path.display()),
                }
            }
        }
        Ok(DatasetStore {
            dir: dir.to_path_buf(),
            metas: Mutex::new(metas),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn meta(&self, id: &str) -> Option<DatasetMeta> {
        self.metas.lock().expect("dataset lock").get(id).cloned()
    }

    pub fn list(&self) -> Vec<DatasetMeta> {
        self.metas
            .lock()
            .expect("dataset lock")
            .values()
            .cloned()
            .collect()
    }

    /// Registers a loaded dataset, writing `csv` alongside when given.
    pub fn insert(&self, meta: DatasetMeta, csv: Option<&[u8]>, data: LoadedDataset) -> io::Result<()> {
        if let Some(bytes) = csv {
            fs::write(self.dir.join(format!("{}.csv", meta.dataset_id)), bytes)?;
        }
        let json = serde_json::to_vec_pretty(&meta).map_err(io::Error::other)?;
        fs::write(self.dir.join(format!("{}.json", meta.dataset_id)), json)?;
        self.cache
            .lock()
            .expect("dataset lock")
            .insert(meta.dataset_id.clone(), Arc::new(data));
        self.metas
            .lock()
            .expect("dataset lock")
            .insert(meta.dataset_id.clone(), meta);
        Ok(())
    }

    /// The dataset's table and KB, loading it from disk on first use.
    pub fn load(
        &self,
        id: &str,
        kbs: &BTreeMap<String, KnowledgeBase>,
        loaders: &PluginRegistry,
    ) -> Result<Arc<LoadedDataset>, String> {
        if let Some(d) = self.cache.lock().expect("dataset lock").get(id) {
            return Ok(d.clone());
        }
        let meta = self.meta(id).ok_or_else(|| format!("unknown dataset {id}"))?;
        let loaded = match &meta.origin {
            DatasetOrigin::Csv => {
                let kb = kbs
                    .get(&meta.kb)
                    .ok_or_else(|| format!("dataset {id} needs unknown KB {:?}", meta.kb))?;
                let path = self.dir.join(format!("{id}.csv"));
                CsvLoader::new(kb.clone())
                    .load(&path.to_string_lossy())
                    .map_err(|e| e.to_string())?
            }
            DatasetOrigin::Loader { loader, source } => loaders
                .resolve(loader)
                .and_then(|l| l.load(source))
                .map_err(|e| e.to_string())?,
        };
        let loaded = Arc::new(loaded);
        self.cache
            .lock()
            .expect("dataset lock")
            .insert(id.to_string(), loaded.clone());
        Ok(loaded)
    }
}
