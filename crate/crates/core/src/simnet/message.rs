use std::collections::{HashSet, VecDeque};
use std::hash::Hash;
use std::sync::Arc;

use crate::identity::{MacAddress, Object, Oid};
use crate::ledger::{Block, Transaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InterestMode {
    /// Relayed to every neighbour except the arrival hop.
    Flood,
    /// Unicast along route hints; dropped where no hint exists.
    Probe,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterestRequest {
    pub request_id: u64,
    pub oid: Oid,
    /// Gateways traversed so far, origin first.
    pub path: Vec<MacAddress>,
    pub mode: InterestMode,
}

/// Where a response was served from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ServedFrom {
    /// The pinned copy at the publisher's own gateway.
    Producer,
    /// Some gateway's cache.
    Cache,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectResponse {
    pub request_id: u64,
    pub oid: Oid,
    pub object: Object,
    /// Reverse of `request_path`; the last element is the origin.
    pub return_path: Vec<MacAddress>,
    /// Index into `return_path` of the gateway this copy is addressed to.
    pub next: usize,
    pub request_path: Vec<MacAddress>,
    pub responder: MacAddress,
    pub source: ServedFrom,
}

#[derive(Clone, Debug)]
pub enum Message {
    Interest(InterestRequest),
    Response(ObjectResponse),
    Transaction(Arc<Transaction>),
    Block(Arc<Block>),
    ChainAdvert { weight: u64, tip: [u8; 32], height: u64 },
    ChainRequest,
    ChainResponse(Arc<Vec<u8>>),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Interest(_) => MessageKind::Interest,
            Message::Response(_) => MessageKind::Response,
            Message::Transaction(_) => MessageKind::Transaction,
            Message::Block(_) => MessageKind::Block,
            Message::ChainAdvert { .. } => MessageKind::ChainAdvert,
            Message::ChainRequest => MessageKind::ChainRequest,
            Message::ChainResponse(_) => MessageKind::ChainResponse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Interest,
    Response,
    Transaction,
    Block,
    ChainAdvert,
    ChainRequest,
    ChainResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::Interest,
        MessageKind::Response,
        MessageKind::Transaction,
        MessageKind::Block,
        MessageKind::ChainAdvert,
        MessageKind::ChainRequest,
        MessageKind::ChainResponse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Set with a capacity bound; the oldest key goes first when full.
#[derive(Clone, Debug)]
pub struct SeenSet<K> {
    capacity: usize,
    order: VecDeque<K>,
    set: HashSet<K>,
}

impl<K: Copy + Eq + Hash> SeenSet<K> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            order: VecDeque::new(),
            set: HashSet::new(),
        }
    }

    /// Returns true on first sighting.
    pub fn insert(&mut self, key: K) -> bool {
        if !self.set.insert(key) {
            return false;
        }
        self.order.push_back(key);
        if self.order.len() > self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.set.remove(&old);
            }
        }
        true
    }

    pub fn contains(&self, key: &K) -> bool {
        self.set.contains(key)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}
