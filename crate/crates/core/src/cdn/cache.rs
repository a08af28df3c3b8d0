use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub url: String,
    pub status: u16,
    pub body: Vec<u8>,
    pub headers: Vec<(String, String)>,
    pub stored_at: u64,
    pub max_age: u64,
    /// Retained past supersession and flushes (replay attacks).
    pub pinned_stale: bool,
}

impl CacheEntry {
    pub fn is_fresh(&self, now: u64) -> bool {
        self.stored_at.saturating_add(self.max_age) >= now
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheListing {
    pub url: String,
    pub stored_at: u64,
    pub max_age: u64,
    pub pinned_stale: bool,
}

/// URL → versions, oldest first. Only pinned entries ever coexist with a
/// newer version.
#[derive(Debug, Default)]
pub struct Cache {
    map: Mutex<HashMap<String, Vec<CacheEntry>>>,
}

impl Cache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Newest version, if still fresh.
    pub fn fresh(&self, url: &str, now: u64) -> Option<CacheEntry> {
        let map = self.map.lock().expect("cache lock");
        map.get(url)
            .and_then(|versions| versions.last())
            .filter(|e| e.is_fresh(now))
            .cloned()
    }

    /// Oldest version, pinned so that it survives later updates.
    pub fn pin_oldest(&self, url: &str) -> Option<CacheEntry> {
        let mut map = self.map.lock().expect("cache lock");
        let oldest = map.get_mut(url)?.first_mut()?;
        oldest.pinned_stale = true;
        Some(oldest.clone())
    }

    /// Supersedes unpinned versions of the same URL.
    pub fn store(&self, entry: CacheEntry) {
        let mut map = self.map.lock().expect("cache lock");
        let versions = map.entry(entry.url.clone()).or_default();
        versions.retain(|e| e.pinned_stale);
        versions.push(entry);
    }

    pub fn flush(&self) {
        let mut map = self.map.lock().expect("cache lock");
        map.values_mut().for_each(|v| v.retain(|e| e.pinned_stale));
        map.retain(|_, v| !v.is_empty());
    }

    /// Every retained version, sorted by URL then age.
    pub fn snapshot(&self) -> Vec<CacheListing> {
        let map = self.map.lock().expect("cache lock");
        let mut out: Vec<CacheListing> = map
            .values()
            .flatten()
            .map(|e| CacheListing {
                url: e.url.clone(),
                stored_at: e.stored_at,
                max_age: e.max_age,
                pinned_stale: e.pinned_stale,
            })
            .collect();
        out.sort_by(|a, b| a.url.cmp(&b.url).then(a.stored_at.cmp(&b.stored_at)));
        out
    }
}
