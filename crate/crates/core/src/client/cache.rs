use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response cache: an in-memory map, optionally backed by a directory.
///
/// On disk each entry is `<dir>/<key[..2]>/<key>.json` holding
/// `{"key": ..., "text": ...}`. Files are written to a temporary name and
/// renamed into place, so a crash never leaves a torn entry.
#[derive(Clone, Debug, Default)]
pub struct ResponseCache {
    memory: Arc<Mutex<HashMap<String, String>>>,
    dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    text: String,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache {
            memory: Default::default(),
            dir: Some(dir),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2.min(key.len())]).join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(t) = self.memory.lock().expect("cache poisoned").get(key) {
            return Some(t.clone());
        }
        let path = self.path_for(key)?;
        let raw = fs::read_to_string(path).ok()?;
        let entry: Entry = serde_json::from_str(&raw).ok()?;
        (entry.key == key).then(|| {
            self.memory
                .lock()
                .expect("cache poisoned")
                .insert(entry.key, entry.text.clone());
            entry.text
        })
    }

    pub fn put(&self, key: &str, text: &str) -> Result<()> {
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), text.to_string());
        let Some(path) = self.path_for(key) else {
            return Ok(());
        };
        let parent = path.parent().expect("entry has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec(&Entry {
            key: key.to_string(),
            text: text.to_string(),
        })?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&body).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_entries_survive_a_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let a = ResponseCache::on_disk(dir.path()).unwrap();
        a.put("abcdef", "hello").unwrap();
        let b = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(b.get("abcdef").as_deref(), Some("hello"));
        assert!(b.get("abcdeg").is_none());
        let leftovers: Vec<_> = fs::read_dir(dir.path().join("ab"))
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
