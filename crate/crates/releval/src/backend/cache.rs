//! Append-only on-disk response cache.
//!
//! Storage is a JSON-lines file, one record per cache key, loaded fully on
//! open. Reads are concurrent; writes are serialized through the appender.
//! Replaying a run from a warm cache issues zero transport calls and
//! reproduces byte-identical responses.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{cache_key, BackendError, CompletionBackend, CompletionRequest, CompletionResponse};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_logprobs: Option<std::collections::BTreeMap<String, f64>>,
    constrained: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

/// Disk-backed key→response store.
pub struct ResponseCache {
    path: PathBuf,
    map: RwLock<HashMap<String, CacheRecord>>,
    appender: Mutex<File>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    /// Opens (or creates) the cache file, loading every existing record.
    pub fn open(path: &Path) -> Result<ResponseCache, BackendError> {
        let io_err = |source: std::io::Error| BackendError::Cache {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let mut map = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(io_err)?;
            for (line_no, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|source| BackendError::CacheCorrupt {
                        line: line_no + 1,
                        source,
                    })?;
                map.insert(record.key.clone(), record);
            }
        }
        let appender = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(ResponseCache {
            path: path.to_path_buf(),
            map: RwLock::new(map),
            appender: Mutex::new(appender),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.len(),
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
        }
    }

    fn get(&self, key: &str) -> Option<CacheRecord> {
        let found = self.map.read().expect("cache lock").get(key).cloned();
        match &found {
            Some(_) => self.hits.fetch_add(1, Ordering::SeqCst),
            None => self.misses.fetch_add(1, Ordering::SeqCst),
        };
        found
    }

    fn put(&self, record: CacheRecord) -> Result<(), BackendError> {
        let mut map = self.map.write().expect("cache lock");
        if map.contains_key(&record.key) {
            return Ok(());
        }
        let line = serde_json::to_string(&record).expect("cache record serializes");
        {
            let mut appender = self.appender.lock().expect("cache appender lock");
            writeln!(appender, "{line}").map_err(|source| BackendError::Cache {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        map.insert(record.key.clone(), record);
        Ok(())
    }

    /// Writes every record as JSON lines in key order, for auditing.
    pub fn export(&self, out: &mut dyn Write) -> Result<(), BackendError> {
        let map = self.map.read().expect("cache lock");
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        for key in keys {
            let line = serde_json::to_string(&map[key]).expect("cache record serializes");
            writeln!(out, "{line}").map_err(|source| BackendError::Cache {
                path: self.path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

/// Wraps any backend with the response cache: the cache is consulted before
/// the wrapped backend and written through after a successful call.
pub struct CachedBackend {
    inner: Arc<dyn CompletionBackend>,
    cache: Arc<ResponseCache>,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>, cache: Arc<ResponseCache>) -> CachedBackend {
        CachedBackend { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl CompletionBackend for CachedBackend {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = cache_key(&self.inner.backend_id(), request);
        if let Some(record) = self.cache.get(&key) {
            return Ok(CompletionResponse {
                text: record.text,
                label_logprobs: record.label_logprobs,
                backend_id: self.inner.backend_id(),
                cached: true,
                constrained: record.constrained,
            });
        }
        let response = self.inner.complete(request)?;
        self.cache.put(CacheRecord {
            key,
            text: response.text.clone(),
            label_logprobs: response.label_logprobs.clone(),
            constrained: response.constrained,
        })?;
        Ok(response)
    }

    fn supports_label_scoring(&self) -> bool {
        self.inner.supports_label_scoring()
    }

    fn transport_calls(&self) -> Option<u64> {
        self.inner.transport_calls()
    }

    fn cache_stats(&self) -> Option<super::CacheStats> {
        Some(self.cache.stats())
    }
}
