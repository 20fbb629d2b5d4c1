use std::collections::{BTreeMap, HashMap};

use crate::identity::{MacAddress, Oid};
use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HintSubject {
    Object(Oid),
    Gateway(MacAddress),
}

#[derive(Clone, Copy, Debug)]
struct Hint {
    next_hop: MacAddress,
    recorded_at: SimTime,
    seq: u64,
}

/// Next-hop hints toward objects and gateways, learned from the upstream
/// neighbour of gossiped transactions and relayed responses. Bounded in size
/// (oldest dropped first) and in age.
#[derive(Clone, Debug)]
pub struct RouteHints {
    capacity: usize,
    ttl: SimTime,
    hints: HashMap<HintSubject, Hint>,
    age_order: BTreeMap<u64, HintSubject>,
    seq: u64,
}

impl RouteHints {
    pub fn new(capacity: usize, ttl: SimTime) -> Self {
        Self {
            capacity,
            ttl,
            hints: HashMap::new(),
            age_order: BTreeMap::new(),
            seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.hints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hints.is_empty()
    }

    pub fn record(&mut self, subject: HintSubject, next_hop: MacAddress, now: SimTime) {
        if self.capacity == 0 {
            return;
        }
        self.seq += 1;
        let hint = Hint {
            next_hop,
            recorded_at: now,
            seq: self.seq,
        };
        if let Some(old) = self.hints.insert(subject, hint) {
            self.age_order.remove(&old.seq);
        }
        self.age_order.insert(self.seq, subject);
        while self.hints.len() > self.capacity {
            let (_, oldest) = self.age_order.pop_first().expect("non-empty");
            self.hints.remove(&oldest);
        }
    }

    pub fn lookup(&mut self, subject: HintSubject, now: SimTime) -> Option<MacAddress> {
        let hint = *self.hints.get(&subject)?;
        if now.saturating_sub(hint.recorded_at) > self.ttl {
            self.hints.remove(&subject);
            self.age_order.remove(&hint.seq);
            return None;
        }
        Some(hint.next_hop)
    }

    pub fn forget(&mut self, subject: HintSubject) {
        if let Some(h) = self.hints.remove(&subject) {
            self.age_order.remove(&h.seq);
        }
    }
}
