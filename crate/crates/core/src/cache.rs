//! Gateway object cache with FIFO, LRU, LFU, and popularity-based eviction.
//!
//! Eviction candidates are kept in a `BTreeSet` ordered by a per-policy key,
//! so the victim is always the first element that is not the object being
//! inserted. All orderings end in a monotone touch sequence number, which
//! makes ties deterministic and equal to "least recently used".

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::identity::{Object, Oid};
use crate::SimTime;

/// Default number of observed interests before an object counts as popular.
pub const DEFAULT_POPULARITY_THRESHOLD: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Fifo,
    Lru,
    Lfu,
    Popularity,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Fifo, Policy::Lru, Policy::Lfu, Policy::Popularity];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fifo => "FIFO",
            Policy::Lru => "LRU",
            Policy::Lfu => "LFU",
            Policy::Popularity => "Popularity",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown cache policy {0:?} (expected FIFO, LRU, LFU or Popularity)")]
pub struct UnknownPolicy(pub String);

impl FromStr for Policy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fifo" => Ok(Policy::Fifo),
            "lru" => Ok(Policy::Lru),
            "lfu" => Ok(Policy::Lfu),
            "popularity" | "pop" => Ok(Policy::Popularity),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub policy: Policy,
    pub popularity_threshold: u64,
}

#[derive(Clone, Debug)]
pub struct CacheEntry {
    pub object: Object,
    pub inserted_at: SimTime,
    pub last_access: SimTime,
    pub access_count: u64,
    insert_seq: u64,
    touch_seq: u64,
}

/// Locally observed interest counts per OID. Never decreases.
#[derive(Clone, Debug, Default)]
pub struct PopularityTable {
    counts: HashMap<Oid, u64>,
}

impl PopularityTable {
    pub fn observe(&mut self, oid: Oid) -> u64 {
        let c = self.counts.entry(oid).or_insert(0);
        *c += 1;
        *c
    }

    pub fn count(&self, oid: &Oid) -> u64 {
        self.counts.get(oid).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub insertions: u64,
    pub evictions: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted { evicted: Vec<Oid> },
    AlreadyPresent,
    /// Larger than the whole cache: relayed but never stored.
    Oversized,
}

impl InsertOutcome {
    pub fn evicted(&self) -> &[Oid] {
        match self {
            InsertOutcome::Inserted { evicted } => evicted,
            _ => &[],
        }
    }
}

type EvictKey = (u64, u64, u64);

#[derive(Clone, Debug)]
pub struct Cache {
    config: CacheConfig,
    entries: HashMap<Oid, CacheEntry>,
    order: BTreeSet<(EvictKey, Oid)>,
    used_bytes: u64,
    seq: u64,
    stats: CacheStats,
    popularity: PopularityTable,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Self {
        Self {
            config,
            entries: HashMap::new(),
            order: BTreeSet::new(),
            used_bytes: 0,
            seq: 0,
            stats: CacheStats::default(),
            popularity: PopularityTable::default(),
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn policy(&self) -> Policy {
        self.config.policy
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            bytes: self.used_bytes,
            ..self.stats
        }
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, oid: &Oid) -> bool {
        self.entries.contains_key(oid)
    }

    pub fn entry(&self, oid: &Oid) -> Option<&CacheEntry> {
        self.entries.get(oid)
    }

    pub fn oids(&self) -> impl Iterator<Item = &Oid> {
        self.entries.keys()
    }

    pub fn popularity(&self) -> &PopularityTable {
        &self.popularity
    }

    fn key(&self, oid: &Oid, e: &CacheEntry) -> EvictKey {
        match self.config.policy {
            Policy::Fifo => (e.insert_seq, 0, 0),
            Policy::Lru => (e.touch_seq, 0, 0),
            Policy::Lfu => (e.access_count, e.touch_seq, 0),
            Policy::Popularity => (self.popularity.count(oid), e.touch_seq, 0),
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Records one interest for `oid` seen at this gateway.
    pub fn observe_interest(&mut self, oid: Oid) -> u64 {
        let old_key = self.entries.get(&oid).map(|e| self.key(&oid, e));
        let count = self.popularity.observe(oid);
        if let Some(old) = old_key {
            self.order.remove(&(old, oid));
            let new = self.key(&oid, &self.entries[&oid]);
            self.order.insert((new, oid));
        }
        count
    }

    pub fn get(&mut self, oid: &Oid, now: SimTime) -> Option<Object> {
        let Some(entry) = self.entries.get(oid) else {
            self.stats.misses += 1;
            return None;
        };
        let old = self.key(oid, entry);
        let seq = self.next_seq();
        let entry = self.entries.get_mut(oid).expect("present");
        entry.last_access = now;
        entry.access_count += 1;
        entry.touch_seq = seq;
        let object = entry.object.clone();
        self.order.remove(&(old, *oid));
        let new = self.key(oid, &self.entries[oid]);
        self.order.insert((new, *oid));
        self.stats.hits += 1;
        Some(object)
    }

    pub fn insert(&mut self, object: Object, now: SimTime) -> InsertOutcome {
        let size = object.size();
        if size > self.config.capacity_bytes {
            return InsertOutcome::Oversized;
        }
        let oid = object.oid;
        if self.entries.contains_key(&oid) {
            return InsertOutcome::AlreadyPresent;
        }
        let seq = self.next_seq();
        let entry = CacheEntry {
            object,
            inserted_at: now,
            last_access: now,
            access_count: 0,
            insert_seq: seq,
            touch_seq: seq,
        };
        let key = self.key(&oid, &entry);
        self.entries.insert(oid, entry);
        self.order.insert((key, oid));
        self.used_bytes += size;
        self.stats.insertions += 1;

        let mut evicted = Vec::new();
        while self.used_bytes > self.config.capacity_bytes {
            let victim = self
                .order
                .iter()
                .find(|(_, o)| *o != oid)
                .copied()
                .expect("over capacity implies another entry");
            self.order.remove(&victim);
            let gone = self.entries.remove(&victim.1).expect("indexed entry");
            self.used_bytes -= gone.object.size();
            self.stats.evictions += 1;
            evicted.push(victim.1);
        }
        InsertOutcome::Inserted { evicted }
    }

    /// Hook for a gateway that relays a response it did not request. Only
    /// the popularity policy caches here, and only objects at or above the
    /// threshold.
    pub fn on_path_observe(&mut self, object: &Object, now: SimTime) -> bool {
        if self.config.policy != Policy::Popularity
            || self.popularity.count(&object.oid) < self.config.popularity_threshold
        {
            return false;
        }
        matches!(
            self.insert(object.clone(), now),
            InsertOutcome::Inserted { .. } | InsertOutcome::AlreadyPresent
        )
    }

    /// Removes an entry outright (fault injection and tests).
    pub fn purge(&mut self, oid: &Oid) -> bool {
        let Some(entry) = self.entries.remove(oid) else {
            return false;
        };
        let key = self.key(oid, &entry);
        self.order.remove(&(key, *oid));
        self.used_bytes -= entry.object.size();
        true
    }
}

pub fn cache_get(cache: &mut Cache, oid: &Oid, now: SimTime) -> Option<Object> {
    cache.get(oid, now)
}

pub fn cache_insert(cache: &mut Cache, object: Object, now: SimTime) -> InsertOutcome {
    cache.insert(object, now)
}

pub fn on_path_observe(cache: &mut Cache, object: &Object, now: SimTime) -> bool {
    cache.on_path_observe(object, now)
}
