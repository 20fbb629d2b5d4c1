use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::engine::Engine;
use super::message::{InterestMode, Message, MessageKind, ServedFrom};
use super::topology::{LinkSpec, Node, Role, Topology};
use crate::gateway::{Action, Delivery, GatewayConfig, GatewayState, Link, Outbox, PublishError, RequestStart};
use crate::identity::{Authority, Certificate, KeyPair, MacAddress, Metadata, Object, Oid};
use crate::ledger::{Block, Chain, Transaction};
use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub gateway: GatewayConfig,
    pub block_interval: SimTime,
    /// Try a unicast probe along route hints before flooding.
    pub use_route_hints: bool,
    /// Override for the request timeout; default is
    /// 4 x gateway diameter x max link latency.
    pub timeout: Option<SimTime>,
    pub authority_seed: u64,
    /// Keep per-request interest and response traces.
    pub record_traces: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("no link between {0} and {1}")]
    UnknownLink(MacAddress, MacAddress),
    #[error("unknown node {0}")]
    UnknownNode(MacAddress),
    #[error("{0} is already part of the network")]
    AlreadyPresent(MacAddress),
    #[error("certificate does not authorise {0}")]
    InvalidCertificate(MacAddress),
    #[error(transparent)]
    Publish(#[from] PublishError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsumeError {
    #[error("delivered object failed verification")]
    IntegrityFailure,
    #[error("no response after retry")]
    Timeout,
    #[error("unknown consumer {0}")]
    UnknownNode(MacAddress),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RequestOutcome {
    /// Served from the default gateway's cache.
    LocalHit,
    /// Served from another gateway's cache.
    RemoteHit,
    /// Served from the producer's pinned copy.
    ProducerFetch,
    IntegrityFailure,
    Timeout,
}

impl RequestOutcome {
    pub fn is_hit(self) -> bool {
        matches!(self, Self::LocalHit | Self::RemoteHit)
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Self::IntegrityFailure | Self::Timeout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Probe,
    Flood,
    Retry,
}

#[derive(Clone, Debug)]
pub struct RequestRecord {
    pub consumer: MacAddress,
    pub gateway: MacAddress,
    pub oid: Oid,
    pub issued_at: SimTime,
    pub completed_at: Option<SimTime>,
    pub outcome: Option<RequestOutcome>,
    pub delivery: Option<Delivery>,
    /// Wire request ids used, one per attempt.
    pub wire_ids: Vec<u64>,
    phase: Phase,
}

#[derive(Clone, Debug, Default)]
pub struct Traces {
    /// wire id -> (receiving gateway, path as received)
    pub interests: HashMap<u64, Vec<(MacAddress, Vec<MacAddress>)>>,
    pub interest_sends: HashMap<u64, u64>,
    /// wire id -> (from, to, arrival time) for every response hop delivered
    pub response_hops: HashMap<u64, Vec<(MacAddress, MacAddress, SimTime)>>,
    /// (time, a, b, enabled) for every link state change
    pub link_log: Vec<(SimTime, MacAddress, MacAddress, bool)>,
    /// Every response that reached its origin, including late duplicates.
    pub delivered: Vec<Delivery>,
}

#[derive(Clone, Copy, Debug)]
struct LinkState {
    spec: LinkSpec,
    enabled: bool,
    epoch: u64,
}

#[derive(Debug)]
enum Event {
    Deliver {
        from: MacAddress,
        to: MacAddress,
        link: usize,
        epoch: u64,
        msg: Message,
    },
    BlockTimer,
    StartRequest(usize),
    Timeout { request: usize, wire: u64 },
    LinkChange { enable: bool, links: Vec<usize> },
}

/// Deterministic keys for a gateway, derived from its MAC and the scenario's
/// authority seed.
pub fn gateway_keys(mac: MacAddress, authority_seed: u64) -> KeyPair {
    let mut n = [0u8; 8];
    n[2..].copy_from_slice(mac.as_bytes());
    KeyPair::derive(&format!("gateway/{authority_seed}"), u64::from_be_bytes(n))
}

/// The simulated mesh: gateways, links, the event queue and the consumer
/// request lifecycle.
pub struct Network {
    topology: Topology,
    config: NetworkConfig,
    engine: Engine<Event>,
    authority: Authority,
    genesis: Block,
    gateways: Vec<GatewayState>,
    gw_index: HashMap<MacAddress, usize>,
    edge_gateway: HashMap<MacAddress, MacAddress>,
    links: Vec<LinkState>,
    link_index: HashMap<(MacAddress, MacAddress), usize>,
    reach_epoch: u64,
    reach: Option<Vec<Arc<BTreeSet<MacAddress>>>>,
    timeout: SimTime,
    requests: Vec<RequestRecord>,
    open_requests: usize,
    wire_to_request: HashMap<u64, usize>,
    next_wire: u64,
    faults: BTreeMap<MacAddress, u32>,
    sent: [u64; MessageKind::ALL.len()],
    dropped: u64,
    trace: Sha256,
    traces: Option<Traces>,
}

fn key(a: MacAddress, b: MacAddress) -> (MacAddress, MacAddress) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Network {
    /// Bootstraps a network: issues certificates for every gateway in
    /// `topology`, builds the genesis block, and starts the block timer.
    pub fn new(topology: Topology, config: NetworkConfig) -> Self {
        let mut authority = Authority::new(config.authority_seed);
        let gw_macs = topology.gateways();
        let certs: Vec<Certificate> = gw_macs
            .iter()
            .map(|&m| {
                let pk = gateway_keys(m, config.authority_seed).public_key();
                authority.issue_certificate(m, pk)
            })
            .collect();
        let genesis = Chain::genesis_block(&authority, &certs);
        let chain = Chain::from_genesis(genesis.clone(), authority.id(), authority.public_key())
            .expect("bootstrap genesis is valid");

        let mut links = Vec::new();
        let mut link_index = HashMap::new();
        for l in topology.gateway_links() {
            link_index.insert(key(l.a, l.b), links.len());
            links.push(LinkState {
                spec: l,
                enabled: true,
                epoch: 0,
            });
        }
        let mut gateways = Vec::new();
        let mut gw_index = HashMap::new();
        for &m in &gw_macs {
            gw_index.insert(m, gateways.len());
            gateways.push(GatewayState::new(
                m,
                gateway_keys(m, config.authority_seed),
                chain.clone(),
                topology.gateway_neighbors(m),
                config.gateway,
            ));
        }
        let mut edge_gateway = HashMap::new();
        for e in topology.edge_nodes() {
            if let Some(g) = topology.default_gateway(e) {
                edge_gateway.insert(e, g);
            }
        }
        let mut net = Self {
            timeout: 1,
            topology,
            config,
            engine: Engine::new(),
            authority,
            genesis,
            gateways,
            gw_index,
            edge_gateway,
            links,
            link_index,
            reach_epoch: 0,
            reach: None,
            requests: Vec::new(),
            open_requests: 0,
            wire_to_request: HashMap::new(),
            next_wire: 1,
            faults: BTreeMap::new(),
            sent: [0; MessageKind::ALL.len()],
            dropped: 0,
            trace: Sha256::new(),
            traces: config.record_traces.then(Traces::default),
        };
        net.timeout = net.default_timeout();
        net.engine.schedule(config.block_interval, Event::BlockTimer);
        net
    }

    fn default_timeout(&self) -> SimTime {
        self.config.timeout.unwrap_or_else(|| {
            let d = self.topology.diameter().max(1) as SimTime;
            4 * d * self.topology.max_latency().max(1)
        })
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn timeout(&self) -> SimTime {
        self.timeout
    }

    pub fn authority(&self) -> &Authority {
        &self.authority
    }

    pub fn authority_mut(&mut self) -> &mut Authority {
        &mut self.authority
    }

    pub fn genesis(&self) -> &Block {
        &self.genesis
    }

    pub fn gateways(&self) -> &[GatewayState] {
        &self.gateways
    }

    pub fn gateway(&self, mac: MacAddress) -> Option<&GatewayState> {
        self.gw_index.get(&mac).map(|&i| &self.gateways[i])
    }

    pub fn gateway_mut(&mut self, mac: MacAddress) -> Option<&mut GatewayState> {
        self.gw_index.get(&mac).map(|&i| &mut self.gateways[i])
    }

    pub fn requests(&self) -> &[RequestRecord] {
        &self.requests
    }

    pub fn request(&self, index: usize) -> &RequestRecord {
        &self.requests[index]
    }

    pub fn request_for_wire(&self, wire: u64) -> Option<usize> {
        self.wire_to_request.get(&wire).copied()
    }

    pub fn pending_requests(&self) -> usize {
        self.open_requests
    }

    pub fn traces(&self) -> Option<&Traces> {
        self.traces.as_ref()
    }

    pub fn messages_sent(&self, kind: MessageKind) -> u64 {
        self.sent[kind.index()]
    }

    pub fn messages_sent_total(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn messages_dropped(&self) -> u64 {
        self.dropped
    }

    /// Hash over every processed event; equal for identical runs.
    pub fn trace_hash(&self) -> [u8; 32] {
        self.trace.clone().finalize().into()
    }

    fn default_gateway_of(&self, node: MacAddress) -> Option<MacAddress> {
        if self.gw_index.contains_key(&node) {
            Some(node)
        } else {
            self.edge_gateway.get(&node).copied()
        }
    }

    // ---- connectivity ----

    fn resolve_links(&self, pairs: &[(MacAddress, MacAddress)]) -> Result<Vec<usize>, NetworkError> {
        pairs
            .iter()
            .map(|&(a, b)| {
                self.link_index
                    .get(&key(a, b))
                    .copied()
                    .ok_or(NetworkError::UnknownLink(a, b))
            })
            .collect()
    }

    fn apply_link_change(&mut self, enable: bool, links: &[usize]) {
        let now = self.now();
        for &i in links {
            let l = &mut self.links[i];
            if l.enabled == enable {
                continue;
            }
            l.enabled = enable;
            l.epoch += 1;
            self.reach_epoch += 1;
            self.reach = None;
            if let Some(t) = &mut self.traces {
                t.link_log.push((now, l.spec.a, l.spec.b, enable));
            }
        }
    }

    /// Disables the named links now. Messages already in flight on them are
    /// lost.
    pub fn set_partition(&mut self, links: &[(MacAddress, MacAddress)]) -> Result<(), NetworkError> {
        let idx = self.resolve_links(links)?;
        self.apply_link_change(false, &idx);
        Ok(())
    }

    pub fn heal_partition(&mut self, links: &[(MacAddress, MacAddress)]) -> Result<(), NetworkError> {
        let idx = self.resolve_links(links)?;
        self.apply_link_change(true, &idx);
        Ok(())
    }

    pub fn schedule_link_change(
        &mut self,
        at: SimTime,
        enable: bool,
        links: &[(MacAddress, MacAddress)],
    ) -> Result<(), NetworkError> {
        let links = self.resolve_links(links)?;
        self.engine.schedule(at, Event::LinkChange { enable, links });
        Ok(())
    }

    pub fn link_enabled(&self, a: MacAddress, b: MacAddress) -> Option<bool> {
        self.link_index.get(&key(a, b)).map(|&i| self.links[i].enabled)
    }

    /// Gateway components under the current link state, ordered by smallest
    /// member.
    pub fn components(&self) -> Vec<BTreeSet<MacAddress>> {
        let mut parent: Vec<usize> = (0..self.gateways.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for l in self.links.iter().filter(|l| l.enabled) {
            let (a, b) = (self.gw_index[&l.spec.a], self.gw_index[&l.spec.b]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<MacAddress>> = BTreeMap::new();
        for i in 0..self.gateways.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().insert(self.gateways[i].mac());
        }
        let mut comps: Vec<_> = groups.into_values().collect();
        comps.sort();
        comps
    }

    fn reachable_sets(&mut self) -> &[Arc<BTreeSet<MacAddress>>] {
        if self.reach.is_none() {
            let mut per: Vec<Arc<BTreeSet<MacAddress>>> = Vec::new();
            per.resize_with(self.gateways.len(), Default::default);
            for comp in self.components() {
                let shared = Arc::new(comp);
                for m in shared.iter() {
                    per[self.gw_index[m]] = shared.clone();
                }
            }
            self.reach = Some(per);
        }
        self.reach.as_deref().unwrap()
    }

    // ---- message plumbing ----

    fn send(&mut self, from: MacAddress, to: MacAddress, msg: Message) {
        let Some(&li) = self.link_index.get(&key(from, to)) else {
            self.dropped += 1;
            return;
        };
        let link = self.links[li];
        if !link.enabled {
            self.dropped += 1;
            return;
        }
        let kind = msg.kind();
        self.sent[kind.index()] += 1;
        if let (Some(t), Message::Interest(req)) = (&mut self.traces, &msg) {
            *t.interest_sends.entry(req.request_id).or_default() += 1;
        }
        let msg = match msg {
            Message::Response(mut r) if r.next == 0 && r.responder == from && self.take_fault(from) => {
                r.object = r.object.corrupted(0);
                Message::Response(r)
            }
            m => m,
        };
        let at = self.now() + link.spec.latency;
        self.engine.schedule(
            at,
            Event::Deliver {
                from,
                to,
                link: li,
                epoch: link.epoch,
                msg,
            },
        );
    }

    fn flush(&mut self, from: MacAddress, out: &mut Outbox) {
        let actions: Vec<Action> = out.drain().collect();
        for a in actions {
            match a {
                Action::Send { to, msg } => self.send(from, to, msg),
                Action::Delivered(d) => self.complete_delivery(from, d),
            }
        }
    }

    fn take_fault(&mut self, gateway: MacAddress) -> bool {
        match self.faults.get_mut(&gateway) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        }
    }

    /// The next `count` objects served by `gateway` leave it with one byte
    /// flipped.
    pub fn inject_corruption(&mut self, gateway: MacAddress, count: u32) {
        *self.faults.entry(gateway).or_default() += count;
    }

    pub fn clear_faults(&mut self) {
        self.faults.clear();
    }

    fn hash_event(&mut self, t: SimTime, seq: u64, tag: u8, a: &MacAddress, b: &MacAddress) {
        self.trace.update(t.to_be_bytes());
        self.trace.update(seq.to_be_bytes());
        self.trace.update([tag]);
        self.trace.update(a.as_bytes());
        self.trace.update(b.as_bytes());
    }

    fn dispatch(&mut self, t: SimTime, seq: u64, event: Event) {
        let zero = MacAddress([0; 6]);
        match event {
            Event::Deliver {
                from,
                to,
                link,
                epoch,
                msg,
            } => {
                self.hash_event(t, seq, msg.kind().index() as u8, &from, &to);
                let l = self.links[link];
                if !l.enabled || l.epoch != epoch {
                    self.dropped += 1;
                    return;
                }
                self.deliver(from, to, msg);
            }
            Event::BlockTimer => {
                self.hash_event(t, seq, 100, &zero, &zero);
                self.block_tick();
                self.engine
                    .schedule(t + self.config.block_interval, Event::BlockTimer);
            }
            Event::StartRequest(i) => {
                let g = self.requests[i].gateway;
                self.hash_event(t, seq, 101, &self.requests[i].consumer.clone(), &g);
                let phase = if self.config.use_route_hints {
                    Phase::Probe
                } else {
                    Phase::Flood
                };
                self.start_attempt(i, phase);
            }
            Event::Timeout { request, wire } => {
                let g = self.requests[request].gateway;
                self.hash_event(t, seq, 102, &g, &g);
                let r = &self.requests[request];
                if r.outcome.is_some() || r.wire_ids.last() != Some(&wire) {
                    return;
                }
                match r.phase {
                    Phase::Probe => self.start_attempt(request, Phase::Flood),
                    Phase::Flood => self.start_attempt(request, Phase::Retry),
                    Phase::Retry => self.finish(request, RequestOutcome::Timeout, None),
                }
            }
            Event::LinkChange { enable, links } => {
                self.hash_event(t, seq, 103 + enable as u8, &zero, &zero);
                self.apply_link_change(enable, &links);
            }
        }
    }

    fn deliver(&mut self, from: MacAddress, to: MacAddress, msg: Message) {
        let Some(&gi) = self.gw_index.get(&to) else {
            return;
        };
        let now = self.now();
        let mut out = Outbox::new();
        let gw = &mut self.gateways[gi];
        match msg {
            Message::Interest(req) => {
                if let Some(t) = &mut self.traces {
                    t.interests
                        .entry(req.request_id)
                        .or_default()
                        .push((to, req.path.clone()));
                }
                gw.handle_interest(from, req, now, &mut out);
            }
            Message::Response(resp) => {
                if let Some(t) = &mut self.traces {
                    t.response_hops
                        .entry(resp.request_id)
                        .or_default()
                        .push((from, to, now));
                }
                gw.handle_response(from, resp, now, &mut out);
            }
            Message::Transaction(tx) => gw.handle_transaction(from, tx, now, &mut out),
            Message::Block(b) => gw.handle_block(from, b, &mut out),
            Message::ChainAdvert { weight, tip, height } => {
                gw.handle_chain_advert(from, weight, tip, height, &mut out)
            }
            Message::ChainRequest => gw.handle_chain_request(from, &mut out),
            Message::ChainResponse(dump) => gw.handle_chain_response(from, &dump, &mut out),
        }
        self.flush(to, &mut out);
    }

    fn block_tick(&mut self) {
        let epoch = self.reach_epoch;
        let reach = self.reachable_sets().to_vec();
        for (i, r) in reach.into_iter().enumerate() {
            let mut out = Outbox::new();
            self.gateways[i].on_block_timer(r, epoch, &mut out);
            let mac = self.gateways[i].mac();
            self.flush(mac, &mut out);
        }
    }

    // ---- requests ----

    fn start_attempt(&mut self, index: usize, phase: Phase) {
        let now = self.now();
        let wire = self.next_wire;
        self.next_wire += 1;
        self.wire_to_request.insert(wire, index);
        let r = &mut self.requests[index];
        r.phase = phase;
        r.wire_ids.push(wire);
        let (gmac, oid) = (r.gateway, r.oid);
        let gi = self.gw_index[&gmac];
        let mode = if phase == Phase::Probe {
            InterestMode::Probe
        } else {
            InterestMode::Flood
        };
        let mut out = Outbox::new();
        let start = self.gateways[gi].begin_request(wire, oid, mode, now, &mut out);
        self.flush(gmac, &mut out);
        match start {
            RequestStart::Local(mut d) => {
                if self.take_fault(gmac) {
                    d.object = d.object.corrupted(0);
                }
                self.complete_delivery(gmac, d);
            }
            RequestStart::Probing(_) | RequestStart::Flooding => {
                self.engine
                    .schedule(now + self.timeout, Event::Timeout { request: index, wire });
            }
            RequestStart::NoRoute => self.start_attempt(index, Phase::Flood),
        }
    }

    fn complete_delivery(&mut self, at: MacAddress, d: Delivery) {
        if let Some(t) = &mut self.traces {
            t.delivered.push(d.clone());
        }
        let Some(&index) = self.wire_to_request.get(&d.request_id) else {
            return;
        };
        let r = &self.requests[index];
        if r.outcome.is_some() || r.gateway != at {
            return;
        }
        let obj = &d.object;
        if !obj.matches(&r.oid) {
            self.finish(index, RequestOutcome::IntegrityFailure, Some(d));
            return;
        }
        let outcome = match d.source {
            ServedFrom::Producer => RequestOutcome::ProducerFetch,
            ServedFrom::Cache if d.responder == at => RequestOutcome::LocalHit,
            ServedFrom::Cache => RequestOutcome::RemoteHit,
        };
        let now = self.now();
        let gi = self.gw_index[&at];
        self.gateways[gi].accept_delivery(&d.object, now);
        self.finish(index, outcome, Some(d));
    }

    fn finish(&mut self, index: usize, outcome: RequestOutcome, delivery: Option<Delivery>) {
        let now = self.now();
        let r = &mut self.requests[index];
        if r.outcome.is_none() {
            self.open_requests -= 1;
        }
        r.outcome = Some(outcome);
        r.completed_at = Some(now);
        r.delivery = delivery;
    }

    /// Queues a request by `consumer` (an edge node or a gateway) for `oid`
    /// at time `at`. Returns the request index.
    pub fn schedule_request(
        &mut self,
        at: SimTime,
        consumer: MacAddress,
        oid: Oid,
    ) -> Result<usize, NetworkError> {
        let gateway = self
            .default_gateway_of(consumer)
            .ok_or(NetworkError::UnknownNode(consumer))?;
        let index = self.requests.len();
        self.requests.push(RequestRecord {
            consumer,
            gateway,
            oid,
            issued_at: at.max(self.now()),
            completed_at: None,
            outcome: None,
            delivery: None,
            wire_ids: Vec::new(),
            phase: Phase::Flood,
        });
        self.open_requests += 1;
        self.engine.schedule(at, Event::StartRequest(index));
        Ok(index)
    }

    /// Floods an interest for `oid` from `origin` right away, bypassing
    /// route hints. Returns the wire request id.
    pub fn flood_interest(&mut self, origin: MacAddress, oid: Oid) -> Result<u64, NetworkError> {
        if !self.gw_index.contains_key(&origin) {
            return Err(NetworkError::UnknownNode(origin));
        }
        let now = self.now();
        let index = self.requests.len();
        self.requests.push(RequestRecord {
            consumer: origin,
            gateway: origin,
            oid,
            issued_at: now,
            completed_at: None,
            outcome: None,
            delivery: None,
            wire_ids: Vec::new(),
            phase: Phase::Flood,
        });
        self.open_requests += 1;
        self.start_attempt(index, Phase::Flood);
        Ok(self.requests[index].wire_ids[0])
    }

    /// Fetches `link` for `consumer`, running the simulation until the
    /// request settles.
    pub fn consume(&mut self, consumer: MacAddress, link: &Link) -> Result<Object, ConsumeError> {
        let now = self.now();
        let index = self
            .schedule_request(now, consumer, link.oid)
            .map_err(|_| ConsumeError::UnknownNode(consumer))?;
        self.run_until_settled(index);
        let r = &self.requests[index];
        match r.outcome {
            Some(o) if !o.is_failure() => Ok(r.delivery.as_ref().expect("delivered").object.clone()),
            Some(RequestOutcome::IntegrityFailure) => Err(ConsumeError::IntegrityFailure),
            _ => Err(ConsumeError::Timeout),
        }
    }

    /// Steps the simulation until request `index` has an outcome.
    pub fn run_until_settled(&mut self, index: usize) {
        let deadline = self.now() + 4 * self.timeout + 1;
        while self.requests[index].outcome.is_none() {
            match self.engine.pop_until(deadline) {
                Some((t, seq, e)) => self.dispatch(t, seq, e),
                None => break,
            }
        }
    }

    pub fn run_until(&mut self, t_end: SimTime) {
        while let Some((t, seq, e)) = self.engine.pop_until(t_end) {
            self.dispatch(t, seq, e);
        }
        self.engine.advance_to(t_end);
    }

    pub fn run_for(&mut self, duration: SimTime) {
        let end = self.now() + duration;
        self.run_until(end);
    }

    /// Runs until every scheduled request has settled or `limit` is reached.
    pub fn run_until_idle(&mut self, limit: SimTime) {
        while self.open_requests > 0 {
            let Some((t, seq, e)) = self.engine.pop_until(limit) else {
                break;
            };
            self.dispatch(t, seq, e);
        }
    }

    // ---- ledger-facing helpers ----

    /// Publishes through the default gateway of `publisher`.
    pub fn publish(
        &mut self,
        publisher: MacAddress,
        payload: Vec<u8>,
        metadata: Metadata,
    ) -> Result<Transaction, NetworkError> {
        let gmac = self
            .default_gateway_of(publisher)
            .ok_or(NetworkError::UnknownNode(publisher))?;
        let gi = self.gw_index[&gmac];
        let mut out = Outbox::new();
        let tx = self.gateways[gi].publish(payload, metadata, &mut out)?;
        self.flush(gmac, &mut out);
        Ok(tx)
    }

    /// Hands `tx` to `gateway` as if it had been created there.
    pub fn submit_transaction(&mut self, gateway: MacAddress, tx: Transaction) -> Result<(), NetworkError> {
        let gi = *self
            .gw_index
            .get(&gateway)
            .ok_or(NetworkError::UnknownNode(gateway))?;
        let now = self.now();
        let mut out = Outbox::new();
        self.gateways[gi].handle_transaction(gateway, Arc::new(tx), now, &mut out);
        self.flush(gateway, &mut out);
        Ok(())
    }

    /// Adds a gateway holding `certificate`, links it to `peers`, and starts
    /// a chain sync from the first peer. The certificate must be issued by
    /// this network's authority for `mac` and `keys`.
    pub fn join_gateway(
        &mut self,
        mac: MacAddress,
        keys: KeyPair,
        certificate: Certificate,
        peers: &[(MacAddress, SimTime)],
    ) -> Result<(), NetworkError> {
        if self.gw_index.contains_key(&mac) || self.edge_gateway.contains_key(&mac) {
            return Err(NetworkError::AlreadyPresent(mac));
        }
        if certificate.subject != mac
            || certificate.public_key != keys.public_key()
            || !certificate.verify_issuer(&self.authority.public_key())
        {
            return Err(NetworkError::InvalidCertificate(mac));
        }
        for &(p, _) in peers {
            if !self.gw_index.contains_key(&p) {
                return Err(NetworkError::UnknownNode(p));
            }
        }
        let chain = Chain::from_genesis(
            self.genesis.clone(),
            self.authority.id(),
            self.authority.public_key(),
        )
        .expect("genesis was valid at bootstrap");
        let mut gw = GatewayState::new(
            mac,
            keys,
            chain,
            peers.iter().map(|p| p.0).collect(),
            self.config.gateway,
        );
        gw.set_join_certificate(certificate);
        self.topology.nodes.push(Node {
            mac,
            role: Role::Gateway,
        });
        for &(p, latency) in peers {
            let spec = LinkSpec { a: p, b: mac, latency };
            self.topology.links.push(spec);
            self.link_index.insert(key(p, mac), self.links.len());
            self.links.push(LinkState {
                spec,
                enabled: true,
                epoch: 0,
            });
            self.gateways[self.gw_index[&p]].add_neighbor(mac);
        }
        self.gw_index.insert(mac, self.gateways.len());
        self.gateways.push(gw);
        self.reach = None;
        self.reach_epoch += 1;
        self.timeout = self.default_timeout();
        if let Some(&(first, _)) = peers.first() {
            self.send(mac, first, Message::ChainRequest);
        }
        Ok(())
    }
}
