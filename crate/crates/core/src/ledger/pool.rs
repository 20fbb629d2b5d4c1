use std::collections::{BTreeMap, HashMap};

use super::chain::Staged;
use super::{Chain, Transaction};

/// Validated transactions waiting for a block, oldest first.
#[derive(Clone, Debug, Default)]
pub struct PendingPool {
    next_seq: u64,
    by_seq: BTreeMap<u64, Transaction>,
    ids: HashMap<[u8; 32], u64>,
}

impl PendingPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.by_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_seq.is_empty()
    }

    pub fn contains(&self, tx: &Transaction) -> bool {
        self.ids.contains_key(&tx.id())
    }

    /// Returns false when the exact transaction is already pending.
    pub fn insert(&mut self, tx: Transaction) -> bool {
        let id = tx.id();
        if self.ids.contains_key(&id) {
            return false;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.ids.insert(id, seq);
        self.by_seq.insert(seq, tx);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.by_seq.values()
    }

    /// Drops everything `chain` has committed or no longer accepts.
    pub fn prune(&mut self, chain: &Chain) {
        let state = chain.state();
        let ids = &mut self.ids;
        self.by_seq.retain(|_, tx| {
            let keep = !state.is_committed(&tx.key()) && state.validate_transaction(tx).is_ok();
            if !keep {
                ids.remove(&tx.id());
            }
            keep
        });
    }

    /// Up to `max` of the oldest transactions that are valid together on top
    /// of `chain`. Invalid ones are dropped from the pool on the way.
    pub fn take_for_block(&mut self, chain: &Chain, max: usize) -> Vec<Transaction> {
        let mut staged = Staged::new(chain.state());
        let mut picked = Vec::new();
        let mut invalid = Vec::new();
        for (&seq, tx) in &self.by_seq {
            if picked.len() >= max {
                break;
            }
            match staged.check_and_stage(tx) {
                Ok(()) => picked.push(tx.clone()),
                Err(_) => invalid.push(seq),
            }
        }
        for seq in invalid {
            if let Some(tx) = self.by_seq.remove(&seq) {
                self.ids.remove(&tx.id());
            }
        }
        picked
    }
}
