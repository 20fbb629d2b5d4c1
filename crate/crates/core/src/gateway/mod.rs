//! The gateway node: publishing, ledger gossip and sync, interest handling,
//! the search index, and route hints.
//!
//! A [`GatewayState`] never talks to another gateway directly. Every handler
//! takes the current time and an [`Outbox`]; the simulator delivers whatever
//! ends up in the outbox as link messages.

mod hints;
mod index;

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::cache::{Cache, CacheConfig, InsertOutcome};
use crate::identity::{Certificate, IdentityError, KeyPair, MacAddress, Metadata, Object, Oid};
use crate::ledger::{
    make_certificate_transaction, make_object_transaction, merge_after_partition, prefers,
    prefers_summary, propose_block, Block, Chain, PendingPool, Transaction,
};
use crate::simnet::{InterestMode, InterestRequest, Message, ObjectResponse, SeenSet, ServedFrom};
use crate::SimTime;

pub use hints::{HintSubject, RouteHints};
pub use index::{tokenize, Link, SearchIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GatewayConfig {
    pub cache: CacheConfig,
    pub max_block_txs: usize,
    pub hint_capacity: usize,
    pub hint_ttl: SimTime,
    pub seen_capacity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub request_id: u64,
    pub object: Object,
    pub source: ServedFrom,
    pub responder: MacAddress,
    pub request_path: Vec<MacAddress>,
    pub return_path: Vec<MacAddress>,
}

impl Delivery {
    pub fn hops(&self) -> usize {
        self.return_path.len()
    }
}

#[derive(Clone, Debug)]
pub enum Action {
    Send { to: MacAddress, msg: Message },
    Delivered(Delivery),
}

#[derive(Debug, Default)]
pub struct Outbox {
    actions: Vec<Action>,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, to: MacAddress, msg: Message) {
        self.actions.push(Action::Send { to, msg });
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, Action> {
        self.actions.drain(..)
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterestOutcome {
    Forwarded,
    Served,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RequestStart {
    /// Served by this gateway without touching the network.
    Local(Delivery),
    Probing(MacAddress),
    Flooding,
    /// Probe requested but there is no usable hint.
    NoRoute,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PublishError {
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error("object {0} is already registered")]
    Duplicate(Oid),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub blocks_proposed: u64,
    pub blocks_accepted: u64,
    pub blocks_rejected: u64,
    pub chains_adopted: u64,
    pub rebroadcast: u64,
    pub on_path_cached: u64,
}

#[derive(Clone, Debug)]
pub struct GatewayState {
    mac: MacAddress,
    keys: KeyPair,
    config: GatewayConfig,
    chain: Chain,
    pending: PendingPool,
    cache: Cache,
    pinned: std::collections::HashMap<Oid, Object>,
    index: SearchIndex,
    route_hints: RouteHints,
    seen_requests: SeenSet<u64>,
    seen_txs: SeenSet<[u8; 32]>,
    seen_blocks: SeenSet<[u8; 32]>,
    neighbors: Vec<MacAddress>,
    reachable: Arc<BTreeSet<MacAddress>>,
    reach_epoch: Option<u64>,
    join_certificate: Option<Certificate>,
    stats: GatewayStats,
}

impl GatewayState {
    pub fn new(
        mac: MacAddress,
        keys: KeyPair,
        chain: Chain,
        neighbors: Vec<MacAddress>,
        config: GatewayConfig,
    ) -> Self {
        let index = SearchIndex::from_chain(&chain);
        Self {
            mac,
            keys,
            config,
            chain,
            pending: PendingPool::new(),
            cache: Cache::new(config.cache),
            pinned: Default::default(),
            index,
            route_hints: RouteHints::new(config.hint_capacity, config.hint_ttl),
            seen_requests: SeenSet::new(config.seen_capacity),
            seen_txs: SeenSet::new(config.seen_capacity),
            seen_blocks: SeenSet::new(config.seen_capacity),
            neighbors,
            reachable: Arc::new(BTreeSet::new()),
            reach_epoch: None,
            join_certificate: None,
            stats: GatewayStats::default(),
        }
    }

    pub fn mac(&self) -> MacAddress {
        self.mac
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pending(&self) -> &PendingPool {
        &self.pending
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Cache {
        &mut self.cache
    }

    pub fn index(&self) -> &SearchIndex {
        &self.index
    }

    pub fn route_hints_mut(&mut self) -> &mut RouteHints {
        &mut self.route_hints
    }

    pub fn neighbors(&self) -> &[MacAddress] {
        &self.neighbors
    }

    pub fn add_neighbor(&mut self, mac: MacAddress) {
        if !self.neighbors.contains(&mac) {
            self.neighbors.push(mac);
        }
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    pub fn holds_pinned(&self, oid: &Oid) -> bool {
        self.pinned.contains_key(oid)
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.len()
    }

    /// Registration this gateway still has to announce once it has synced.
    pub fn set_join_certificate(&mut self, cert: Certificate) {
        self.join_certificate = Some(cert);
    }

    pub fn is_joining(&self) -> bool {
        self.join_certificate.is_some()
    }

    /// The chain's active set restricted to gateways reachable right now.
    pub fn active_set(&self) -> Vec<MacAddress> {
        let all = self.chain.active_set();
        if self.reachable.is_empty() {
            return all;
        }
        all.into_iter().filter(|m| self.reachable.contains(m)).collect()
    }

    fn gossip(&self, msg: Message, except: Option<MacAddress>, out: &mut Outbox) {
        for &n in &self.neighbors {
            if Some(n) != except {
                out.send(n, msg.clone());
            }
        }
    }

    // ---- publishing and search ----

    pub fn publish(
        &mut self,
        payload: Vec<u8>,
        metadata: Metadata,
        out: &mut Outbox,
    ) -> Result<Transaction, PublishError> {
        let tx = make_object_transaction(&payload, metadata.clone(), &self.keys, self.mac)?;
        let oid = tx.oid().expect("object registration");
        if self.chain.state().oid_committed(&oid) || self.pinned.contains_key(&oid) {
            return Err(PublishError::Duplicate(oid));
        }
        let object = Object::new(payload, metadata)?;
        self.pinned.insert(oid, object);
        self.seen_txs.insert(tx.id());
        self.pending.insert(tx.clone());
        self.gossip(Message::Transaction(Arc::new(tx.clone())), None, out);
        Ok(tx)
    }

    pub fn search<S: AsRef<str>>(&self, query: &[S]) -> Vec<Link> {
        self.index.search(query)
    }

    // ---- retrieval ----

    fn serve_locally(&mut self, oid: &Oid, now: SimTime) -> Option<(Object, ServedFrom)> {
        if let Some(obj) = self.pinned.get(oid) {
            return Some((obj.clone(), ServedFrom::Producer));
        }
        self.cache.get(oid, now).map(|o| (o, ServedFrom::Cache))
    }

    fn hinted_next_hop(&mut self, oid: &Oid, now: SimTime) -> Option<MacAddress> {
        if let Some(hop) = self.route_hints.lookup(HintSubject::Object(*oid), now) {
            return Some(hop);
        }
        let origin = self.index.origin_of(oid)?;
        if origin == self.mac {
            return None;
        }
        self.route_hints.lookup(HintSubject::Gateway(origin), now)
    }

    /// Starts retrieval of `oid` on behalf of a local consumer.
    pub fn begin_request(
        &mut self,
        request_id: u64,
        oid: Oid,
        mode: InterestMode,
        now: SimTime,
        out: &mut Outbox,
    ) -> RequestStart {
        self.seen_requests.insert(request_id);
        self.cache.observe_interest(oid);
        if let Some((object, source)) = self.serve_locally(&oid, now) {
            return RequestStart::Local(Delivery {
                request_id,
                object,
                source,
                responder: self.mac,
                request_path: vec![],
                return_path: vec![],
            });
        }
        let req = InterestRequest {
            request_id,
            oid,
            path: vec![self.mac],
            mode,
        };
        match mode {
            InterestMode::Probe => match self.hinted_next_hop(&oid, now) {
                Some(hop) if self.neighbors.contains(&hop) => {
                    out.send(hop, Message::Interest(req));
                    RequestStart::Probing(hop)
                }
                _ => RequestStart::NoRoute,
            },
            InterestMode::Flood => {
                self.gossip(Message::Interest(req), None, out);
                RequestStart::Flooding
            }
        }
    }

    pub fn handle_interest(
        &mut self,
        from: MacAddress,
        req: InterestRequest,
        now: SimTime,
        out: &mut Outbox,
    ) -> InterestOutcome {
        if !self.seen_requests.insert(req.request_id) || req.path.contains(&self.mac) {
            return InterestOutcome::Dropped;
        }
        self.cache.observe_interest(req.oid);
        if let Some((object, source)) = self.serve_locally(&req.oid, now) {
            let return_path: Vec<MacAddress> = req.path.iter().rev().copied().collect();
            let first = return_path[0];
            out.send(
                first,
                Message::Response(ObjectResponse {
                    request_id: req.request_id,
                    oid: req.oid,
                    object,
                    return_path,
                    next: 0,
                    request_path: req.path,
                    responder: self.mac,
                    source,
                }),
            );
            return InterestOutcome::Served;
        }
        let mut fwd = req;
        fwd.path.push(self.mac);
        match fwd.mode {
            InterestMode::Flood => {
                self.gossip(Message::Interest(fwd), Some(from), out);
                InterestOutcome::Forwarded
            }
            InterestMode::Probe => match self.hinted_next_hop(&fwd.oid, now) {
                Some(hop)
                    if hop != from && !fwd.path.contains(&hop) && self.neighbors.contains(&hop) =>
                {
                    out.send(hop, Message::Interest(fwd));
                    InterestOutcome::Forwarded
                }
                _ => InterestOutcome::Dropped,
            },
        }
    }

    pub fn handle_response(
        &mut self,
        from: MacAddress,
        mut resp: ObjectResponse,
        now: SimTime,
        out: &mut Outbox,
    ) {
        if resp.return_path.get(resp.next) != Some(&self.mac) {
            return;
        }
        self.record_route_hint(HintSubject::Object(resp.oid), from, now);
        self.record_route_hint(HintSubject::Gateway(resp.responder), from, now);
        if resp.next + 1 == resp.return_path.len() {
            out.actions.push(Action::Delivered(Delivery {
                request_id: resp.request_id,
                object: resp.object,
                source: resp.source,
                responder: resp.responder,
                request_path: resp.request_path,
                return_path: resp.return_path,
            }));
            return;
        }
        self.observe_transit(&resp.object, now);
        resp.next += 1;
        let to = resp.return_path[resp.next];
        out.send(to, Message::Response(resp));
    }

    fn observe_transit(&mut self, object: &Object, now: SimTime) {
        let cache = &self.cache;
        let would_cache = cache.policy() == crate::cache::Policy::Popularity
            && !cache.contains(&object.oid)
            && !self.pinned.contains_key(&object.oid)
            && cache.popularity().count(&object.oid) >= cache.config().popularity_threshold;
        if would_cache && object.verify() && self.cache.on_path_observe(object, now) {
            self.stats.on_path_cached += 1;
        }
    }

    /// The requesting consumer verified `object`; keep a copy.
    pub fn accept_delivery(&mut self, object: &Object, now: SimTime) -> InsertOutcome {
        if self.pinned.contains_key(&object.oid) {
            return InsertOutcome::AlreadyPresent;
        }
        self.cache.insert(object.clone(), now)
    }

    pub fn record_route_hint(&mut self, subject: HintSubject, next_hop: MacAddress, now: SimTime) {
        if next_hop != self.mac {
            self.route_hints.record(subject, next_hop, now);
        }
    }

    // ---- ledger ----

    pub fn handle_transaction(
        &mut self,
        from: MacAddress,
        tx: Arc<Transaction>,
        now: SimTime,
        out: &mut Outbox,
    ) {
        if !self.seen_txs.insert(tx.id()) {
            return;
        }
        if self.chain.state().is_committed(&tx.key()) || self.chain.validate_transaction(&tx).is_err() {
            return;
        }
        if let Some(oid) = tx.oid() {
            self.record_route_hint(HintSubject::Object(oid), from, now);
        }
        self.record_route_hint(HintSubject::Gateway(tx.origin), from, now);
        self.pending.insert((*tx).clone());
        self.gossip(Message::Transaction(tx), Some(from), out);
    }

    fn apply_block(&mut self, block: &Arc<Block>) {
        for tx in &block.transactions {
            self.index.add(tx);
        }
        self.pending.prune(&self.chain);
    }

    pub fn handle_block(&mut self, from: MacAddress, block: Arc<Block>, out: &mut Outbox) {
        if !self.seen_blocks.insert(block.block_digest) {
            return;
        }
        if self.chain.contains_block(&block.block_digest) {
            return;
        }
        if block.prev_digest == self.chain.tip_digest() {
            let active = self.active_set();
            match self.chain.append(block.clone(), &active) {
                Ok(()) => {
                    self.stats.blocks_accepted += 1;
                    self.apply_block(&block);
                    self.gossip(Message::Block(block), Some(from), out);
                }
                Err(_) => self.stats.blocks_rejected += 1,
            }
        } else {
            // not on our tip: fetch the sender's chain and let fork choice decide
            out.send(from, Message::ChainRequest);
        }
    }

    fn advert(&self) -> Message {
        Message::ChainAdvert {
            weight: self.chain.weight(),
            tip: self.chain.tip_digest(),
            height: self.chain.height(),
        }
    }

    pub fn advertise(&self, out: &mut Outbox) {
        self.gossip(self.advert(), None, out);
    }

    pub fn handle_chain_advert(
        &mut self,
        from: MacAddress,
        weight: u64,
        tip: [u8; 32],
        height: u64,
        out: &mut Outbox,
    ) {
        if tip == self.chain.tip_digest() {
            return;
        }
        if self.chain.contains_block(&tip) {
            out.send(from, self.advert());
        } else if prefers_summary((weight, tip), (self.chain.weight(), self.chain.tip_digest()))
            || height > self.chain.height()
        {
            out.send(from, Message::ChainRequest);
        } else {
            out.send(from, self.advert());
        }
    }

    pub fn handle_chain_request(&self, from: MacAddress, out: &mut Outbox) {
        out.send(from, Message::ChainResponse(Arc::new(self.chain.dump())));
    }

    pub fn handle_chain_response(&mut self, from: MacAddress, dump: &[u8], out: &mut Outbox) {
        let state = self.chain.state();
        let Ok(candidate) = crate::ledger::Chain::load(dump, state.authority_id(), state.authority_key()) else {
            return;
        };
        if candidate.tip_digest() != self.chain.tip_digest() {
            if self.chain.is_prefix_of(&candidate) {
                self.adopt(candidate, Vec::new(), out);
            } else if candidate.is_prefix_of(&self.chain) {
                out.send(from, self.advert());
            } else if prefers(&candidate, &self.chain) {
                let (adopted, rebroadcast) = merge_after_partition(&self.chain, &candidate);
                self.adopt(adopted, rebroadcast, out);
            } else {
                out.send(from, self.advert());
            }
        }
        if let Some(cert) = self.join_certificate.take() {
            let tx = make_certificate_transaction(cert, &self.keys, self.mac);
            self.seen_txs.insert(tx.id());
            if self.chain.validate_transaction(&tx).is_ok() {
                self.pending.insert(tx.clone());
                self.gossip(Message::Transaction(Arc::new(tx)), None, out);
            }
        }
    }

    fn adopt(&mut self, chain: Chain, rebroadcast: Vec<Transaction>, out: &mut Outbox) {
        for b in chain.blocks() {
            self.seen_blocks.insert(b.block_digest);
        }
        self.chain = chain;
        self.index = SearchIndex::from_chain(&self.chain);
        self.pending.prune(&self.chain);
        self.stats.chains_adopted += 1;
        for tx in rebroadcast {
            if self.chain.validate_transaction(&tx).is_ok() && self.pending.insert(tx.clone()) {
                self.stats.rebroadcast += 1;
                self.seen_txs.insert(tx.id());
                self.gossip(Message::Transaction(Arc::new(tx)), None, out);
            }
        }
        self.advertise(out);
    }

    /// Block-interval tick: refresh reachability, advertise the chain if it
    /// changed, and propose if this gateway holds the slot.
    pub fn on_block_timer(
        &mut self,
        reachable: Arc<BTreeSet<MacAddress>>,
        reach_epoch: u64,
        out: &mut Outbox,
    ) -> Option<Arc<Block>> {
        if self.reach_epoch != Some(reach_epoch) {
            let changed = self.reach_epoch.is_some();
            self.reach_epoch = Some(reach_epoch);
            self.reachable = reachable;
            if changed {
                self.advertise(out);
            }
        }
        if self.join_certificate.is_some() {
            return None;
        }
        let active = self.active_set();
        let block = propose_block(
            &self.chain,
            &mut self.pending,
            self.mac,
            &self.keys,
            &active,
            self.config.max_block_txs,
        )?;
        let block = Arc::new(block);
        self.chain
            .append(block.clone(), &active)
            .expect("own proposal validates");
        self.seen_blocks.insert(block.block_digest);
        self.stats.blocks_proposed += 1;
        self.apply_block(&block);
        self.gossip(Message::Block(block.clone()), None, out);
        Some(block)
    }
}
