//! Content-addressed response cache.
//!
//! Entries live at `<dir>/<endpoint>/<request_hash>.json` and are written with
//! a temp-file-then-rename so concurrent writers never expose partial files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{request_hash, BackendError, Endpoint, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendCallRecord {
    pub endpoint: Endpoint,
    pub request_hash: String,
    pub request: Value,
    pub response: Value,
    /// Seconds since the Unix epoch at store time.
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, endpoint: Endpoint, hash: &str) -> PathBuf {
        self.dir.join(endpoint.as_str()).join(format!("{hash}.json"))
    }

    /// Returns the stored record, or `None` on a miss. Unreadable or
    /// mismatching entries count as misses.
    pub fn get(&self, endpoint: Endpoint, hash: &str) -> Option<BackendCallRecord> {
        let path = self.entry_path(endpoint, hash);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(_) => return None,
        };
        match serde_json::from_slice::<BackendCallRecord>(&bytes) {
            Ok(rec) if rec.endpoint == endpoint && rec.request_hash == hash => Some(rec),
            Ok(_) => {
                warn!("cache entry {} does not match its key; ignoring", path.display());
                None
            }
            Err(e) => {
                warn!("corrupt cache entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    pub fn put(&self, record: &BackendCallRecord) -> std::io::Result<()> {
        let path = self.entry_path(record.endpoint, &record.request_hash);
        let parent = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(parent)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        serde_json::to_writer_pretty(&mut tmp, record)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// A transport that consults a [`CacheStore`] before calling through.
pub struct CachedTransport<T> {
    inner: T,
    store: CacheStore,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<T: Transport> CachedTransport<T> {
    pub fn new(inner: T, store: CacheStore) -> Self {
        Self { inner, store, hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Number of calls forwarded to the inner transport.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }
}

impl<T: Transport> Transport for CachedTransport<T> {
    fn call(&self, endpoint: Endpoint, request: &Value) -> Result<Value, BackendError> {
        let hash = request_hash(endpoint, request);
        if let Some(rec) = self.store.get(endpoint, &hash) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(rec.response);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.call(endpoint, request)?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let record = BackendCallRecord {
            endpoint,
            request_hash: hash,
            request: request.clone(),
            response: response.clone(),
            timestamp,
        };
        if let Err(e) = self.store.put(&record) {
            warn!("failed to store cache entry for {endpoint}: {e}");
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Counting, MockFixtures, MockTransport};
    use serde_json::json;
    use std::sync::Arc;

    fn mock() -> Arc<Counting<MockTransport>> {
        let fixtures: MockFixtures = serde_json::from_value(json!({
            "captions": {"a": "cap a", "b": "cap b"},
            "chat_fallback": "echo"
        }))
        .unwrap();
        Arc::new(Counting::new(MockTransport::new(fixtures)))
    }

    #[test]
    fn same_request_twice_hits_backend_once() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let cached = CachedTransport::new(inner.clone(), CacheStore::new(dir.path()));
        let req = json!({"image_id": "a", "image_uri": "a.jpg"});
        let first = cached.call(Endpoint::Caption, &req).unwrap();
        let second = cached.call(Endpoint::Caption, &req).unwrap();
        assert_eq!(first, second);
        assert_eq!(inner.calls(), 1);
        assert_eq!((cached.hits(), cached.misses()), (1, 1));
    }

    #[test]
    fn warm_cache_survives_a_new_transport() {
        let dir = tempfile::tempdir().unwrap();
        let req = json!({"image_id": "b"});
        let cold = CachedTransport::new(mock(), CacheStore::new(dir.path()));
        let v = cold.call(Endpoint::Caption, &req).unwrap();
        let inner = mock();
        let warm = CachedTransport::new(inner.clone(), CacheStore::new(dir.path()));
        assert_eq!(warm.call(Endpoint::Caption, &req).unwrap(), v);
        assert_eq!(inner.calls(), 0);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let store = CacheStore::new(dir.path());
        let req = json!({"image_id": "a"});
        let hash = request_hash(Endpoint::Caption, &req);
        let path = store.entry_path(Endpoint::Caption, &hash);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, "{not json").unwrap();
        let inner = mock();
        let cached = CachedTransport::new(inner.clone(), store.clone());
        assert_eq!(cached.call(Endpoint::Caption, &req).unwrap()["caption"], "cap a");
        assert_eq!(inner.calls(), 1);
        // the miss rewrote a valid entry
        assert!(store.get(Endpoint::Caption, &hash).is_some());
    }

    #[test]
    fn errors_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let inner = mock();
        let cached = CachedTransport::new(inner.clone(), CacheStore::new(dir.path()));
        let req = json!({"image_id": "missing"});
        assert!(cached.call(Endpoint::Caption, &req).is_err());
        assert!(cached.call(Endpoint::Caption, &req).is_err());
        assert_eq!(inner.calls(), 2);
    }
}
