//! Lookup table of solved node relaxations keyed by instance and fixings.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{build_relaxation, solve_relaxation, Fixings, RelaxError, RelaxResult, RelaxStatus};
use crate::model::MinlpInstance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub instance_id: String,
    pub fixings: String,
}

impl CacheKey {
    pub fn new(instance_id: &str, fixings: &Fixings) -> Self {
        CacheKey {
            instance_id: instance_id.to_string(),
            fixings: fixings.canonical_key(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: CacheKey,
    result: RelaxResult,
}

/// Concurrent readers, serialized inserts; an inserted entry never changes.
#[derive(Debug, Default)]
pub struct SolveCache {
    entries: RwLock<HashMap<CacheKey, RelaxResult>>,
    hits: AtomicU64,
    misses: AtomicU64,
    log: Option<Mutex<BufWriter<File>>>,
}

impl SolveCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) an append-only record file and preloads every
    /// complete record in it. A torn trailing line is ignored.
    pub fn with_persistence(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                match serde_json::from_str::<Record>(&line) {
                    Ok(r) => {
                        entries.entry(r.key).or_insert(r.result);
                    }
                    Err(e) => log::warn!("skipping unreadable cache record: {e}"),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(SolveCache {
            entries: RwLock::new(entries),
            log: Some(Mutex::new(BufWriter::new(file))),
            ..Default::default()
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up a key without touching the counters.
    pub fn peek(&self, key: &CacheKey) -> Option<RelaxResult> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    fn lookup(&self, key: &CacheKey) -> Option<RelaxResult> {
        let found = self.peek(key);
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        } else {
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    /// Inserts unless the key is already present; returns the stored entry.
    fn insert(&self, key: CacheKey, result: RelaxResult) -> RelaxResult {
        let mut map = self.entries.write().expect("cache lock poisoned");
        if let Some(existing) = map.get(&key) {
            return existing.clone();
        }
        if let Some(log) = &self.log {
            let mut w = log.lock().expect("cache log lock poisoned");
            let rec = Record {
                key: key.clone(),
                result: result.clone(),
            };
            let written = serde_json::to_string(&rec)
                .map_err(io::Error::from)
                .and_then(|s| writeln!(w, "{s}"))
                .and_then(|_| w.flush());
            if let Err(e) = written {
                log::warn!("cache persistence write failed: {e}");
            }
        }
        map.insert(key, result.clone());
        result
    }
}

/// Returns the stored relaxation for `(instance, fixings)` or solves and
/// stores it. Numerical failures are returned but never stored.
pub fn cached_solve(
    cache: &SolveCache,
    instance: &MinlpInstance,
    fixings: &Fixings,
) -> Result<RelaxResult, RelaxError> {
    let key = CacheKey::new(instance.id(), fixings);
    if let Some(hit) = cache.lookup(&key) {
        return Ok(hit);
    }
    let result = solve_relaxation(&build_relaxation(instance, fixings)?)?;
    if result.status == RelaxStatus::NumericalFailure {
        return Ok(result);
    }
    Ok(cache.insert(key, result))
}
