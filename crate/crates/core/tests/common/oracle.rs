//! Reference cache that keeps nothing but the operation history and
//! recomputes every entry's bookkeeping from scratch at each eviction.

use dweb::cache::{Cache, CacheConfig, InsertOutcome, Policy};
use dweb::identity::{MacAddress, Metadata, Object, Oid};
use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub enum Op {
    Insert(usize),
    Get(usize),
    Observe(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    Insert(usize),
    Hit(usize),
    Observe(usize),
}

pub struct OracleCache {
    policy: Policy,
    capacity: u64,
    sizes: Vec<u64>,
    history: Vec<Ev>,
    resident: Vec<usize>,
}

pub enum OracleOutcome {
    Hit(bool),
    Evicted(Vec<usize>),
    AlreadyPresent,
    Oversized,
    Observed,
}

impl OracleCache {
    pub fn new(policy: Policy, capacity: u64, sizes: Vec<u64>) -> Self {
        Self {
            policy,
            capacity,
            sizes,
            history: Vec::new(),
            resident: Vec::new(),
        }
    }

    /// Step of the most recent insertion of `o`.
    fn inserted_at(&self, o: usize) -> usize {
        self.history
            .iter()
            .rposition(|e| *e == Ev::Insert(o))
            .expect("resident objects were inserted")
    }

    fn last_access(&self, o: usize) -> usize {
        let since = self.inserted_at(o);
        (since..self.history.len())
            .rev()
            .find(|&i| self.history[i] == Ev::Hit(o))
            .unwrap_or(since)
    }

    fn access_count(&self, o: usize) -> usize {
        let since = self.inserted_at(o);
        self.history[since..].iter().filter(|e| **e == Ev::Hit(o)).count()
    }

    fn popularity(&self, o: usize) -> usize {
        self.history.iter().filter(|e| **e == Ev::Observe(o)).count()
    }

    fn rank(&self, o: usize) -> (usize, usize) {
        match self.policy {
            Policy::Fifo => (self.inserted_at(o), 0),
            Policy::Lru => (self.last_access(o), 0),
            Policy::Lfu => (self.access_count(o), self.last_access(o)),
            Policy::Popularity => (self.popularity(o), self.last_access(o)),
        }
    }

    pub fn resident_sorted(&self) -> Vec<usize> {
        let mut r = self.resident.clone();
        r.sort_unstable();
        r
    }

    fn used(&self) -> u64 {
        self.resident.iter().map(|&o| self.sizes[o]).sum()
    }

    pub fn apply(&mut self, op: Op) -> OracleOutcome {
        match op {
            Op::Observe(o) => {
                self.history.push(Ev::Observe(o));
                OracleOutcome::Observed
            }
            Op::Get(o) => {
                let hit = self.resident.contains(&o);
                if hit {
                    self.history.push(Ev::Hit(o));
                }
                OracleOutcome::Hit(hit)
            }
            Op::Insert(o) => {
                if self.sizes[o] > self.capacity {
                    return OracleOutcome::Oversized;
                }
                if self.resident.contains(&o) {
                    return OracleOutcome::AlreadyPresent;
                }
                self.history.push(Ev::Insert(o));
                self.resident.push(o);
                let mut evicted = Vec::new();
                while self.used() > self.capacity {
                    let victim = self
                        .resident
                        .iter()
                        .copied()
                        .filter(|&r| r != o)
                        .min_by_key(|&r| self.rank(r))
                        .expect("something to evict");
                    self.resident.retain(|&r| r != victim);
                    evicted.push(victim);
                }
                OracleOutcome::Evicted(evicted)
            }
        }
    }
}

/// Maps evicted oids back to object indices.
pub fn indices(oids: &[Oid], all: &[Oid]) -> Vec<usize> {
    oids.iter()
        .map(|o| all.iter().position(|a| a == o).expect("known oid"))
        .collect()
}

/// Random sequence of at most `max_ops` operations over `objects` objects,
/// with sizes drawn so that a handful fit in `capacity`.
pub fn random_case(rng: &mut impl Rng, max_ops: usize, objects: usize) -> (Vec<u64>, u64, Vec<Op>) {
    let n = rng.random_range(1..=objects);
    let sizes: Vec<u64> = (0..n).map(|_| rng.random_range(1..=40)).collect();
    let capacity = rng.random_range(20..=120);
    let len = rng.random_range(1..=max_ops);
    let ops = (0..len)
        .map(|_| {
            let o = rng.random_range(0..n);
            match rng.random_range(0..10) {
                0..=3 => Op::Insert(o),
                4..=7 => Op::Get(o),
                _ => Op::Observe(o),
            }
        })
        .collect();
    (sizes, capacity, ops)
}

/// Replays `ops` on a real cache and on the oracle; returns the first
/// divergence.
pub fn compare(policy: Policy, sizes: &[u64], capacity: u64, ops: &[Op]) -> Result<(), String> {
    let objects: Vec<Object> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let payload = vec![i as u8; s as usize];
            let meta = Metadata {
                name: format!("o{i}"),
                keywords: Vec::new(),
                publisher: MacAddress::default(),
                created_at: 0,
                size_bytes: s,
            };
            Object::new(payload, meta).expect("sizes agree")
        })
        .collect();
    let oids: Vec<Oid> = objects.iter().map(|o| o.oid).collect();
    let mut cache = Cache::new(CacheConfig {
        capacity_bytes: capacity,
        policy,
        popularity_threshold: 1,
    });
    let mut oracle = OracleCache::new(policy, capacity, sizes.to_vec());
    for (step, &op) in ops.iter().enumerate() {
        let now = step as u64;
        let fail = |what: String| Err(format!("{policy} step {step} {op:?}: {what}"));
        match (op, oracle.apply(op)) {
            (Op::Observe(o), OracleOutcome::Observed) => {
                cache.observe_interest(oids[o]);
            }
            (Op::Get(o), OracleOutcome::Hit(hit)) => {
                if cache.get(&oids[o], now).is_some() != hit {
                    return fail(format!("expected hit={hit}"));
                }
            }
            (Op::Insert(o), expected) => {
                let got = cache.insert(objects[o].clone(), now);
                let same = match (&got, &expected) {
                    (InsertOutcome::Inserted { evicted }, OracleOutcome::Evicted(want)) => {
                        indices(evicted, &oids) == *want
                    }
                    (InsertOutcome::AlreadyPresent, OracleOutcome::AlreadyPresent) => true,
                    (InsertOutcome::Oversized, OracleOutcome::Oversized) => true,
                    _ => false,
                };
                if !same {
                    return fail(format!("cache gave {got:?}"));
                }
            }
            _ => unreachable!("oracle answers in kind"),
        }
        let mut have: Vec<usize> = indices(&cache.oids().copied().collect::<Vec<_>>(), &oids);
        have.sort_unstable();
        if have != oracle.resident_sorted() {
            return fail("resident sets differ".into());
        }
    }
    Ok(())
}
