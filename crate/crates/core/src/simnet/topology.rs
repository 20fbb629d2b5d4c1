use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::identity::MacAddress;
use crate::SimTime;

pub const DEFAULT_LATENCY: SimTime = 1;

const GATEWAY_PREFIX: u8 = 0x02;
const PUBLISHER_PREFIX: u8 = 0x0a;
const CONSUMER_PREFIX: u8 = 0x06;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Gateway,
    Consumer,
    Publisher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub mac: MacAddress,
    pub role: Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkSpec {
    pub a: MacAddress,
    pub b: MacAddress,
    pub latency: SimTime,
}

impl LinkSpec {
    pub fn other(&self, end: MacAddress) -> Option<MacAddress> {
        if end == self.a {
            Some(self.b)
        } else if end == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("need at least 2 gateways, got {0}")]
    TooFewGateways(usize),
    #[error("at most 65535 gateways supported, got {0}")]
    TooManyGateways(usize),
    #[error("consumers_per_gateway must be between 1 and 255, got {0}")]
    BadEdgeCount(usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("self link at {0}")]
    SelfLink(MacAddress),
    #[error("duplicate link {0} - {1}")]
    DuplicateLink(MacAddress, MacAddress),
    #[error("edge node {0} must attach to exactly one gateway")]
    BadAttachment(MacAddress),
}

pub fn gateway_mac(index: usize) -> MacAddress {
    let n = (index + 1) as u16;
    let [hi, lo] = n.to_be_bytes();
    MacAddress([GATEWAY_PREFIX, 0, 0, 0, hi, lo])
}

/// Edge node `slot` of gateway `gateway_index`; slot 0 is the publisher.
pub fn edge_mac(gateway_index: usize, slot: usize) -> MacAddress {
    let n = (gateway_index + 1) as u16;
    let [hi, lo] = n.to_be_bytes();
    let prefix = if slot == 0 { PUBLISHER_PREFIX } else { CONSUMER_PREFIX };
    MacAddress([prefix, 0, hi, lo, 0, slot as u8])
}

pub fn role_of(mac: MacAddress) -> Option<Role> {
    match mac.0[0] {
        GATEWAY_PREFIX => Some(Role::Gateway),
        PUBLISHER_PREFIX => Some(Role::Publisher),
        CONSUMER_PREFIX => Some(Role::Consumer),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<LinkSpec>,
}

impl Topology {
    pub fn new(nodes: Vec<Node>, links: Vec<LinkSpec>) -> Result<Self, TopologyError> {
        let mut seen = BTreeSet::new();
        for l in &links {
            if l.a == l.b {
                return Err(TopologyError::SelfLink(l.a));
            }
            if !seen.insert(ordered(l.a, l.b)) {
                return Err(TopologyError::DuplicateLink(l.a, l.b));
            }
        }
        let topo = Self { nodes, links };
        for n in &topo.nodes {
            if n.role != Role::Gateway {
                let gws = topo
                    .neighbors(n.mac)
                    .filter(|m| topo.role(*m) == Some(Role::Gateway))
                    .count();
                if gws != 1 {
                    return Err(TopologyError::BadAttachment(n.mac));
                }
            }
        }
        Ok(topo)
    }

    /// Hand-built gateway graph: gateway `i` is [`gateway_mac(i)`], links
    /// are index pairs with the default latency, and every gateway gets
    /// `consumers_per_gateway` edge nodes.
    pub fn with_links(
        gateway_count: usize,
        links: &[(usize, usize)],
        consumers_per_gateway: usize,
    ) -> Result<Self, TopologyError> {
        let mut nodes: Vec<Node> = (0..gateway_count)
            .map(|g| Node {
                mac: gateway_mac(g),
                role: Role::Gateway,
            })
            .collect();
        let mut specs: Vec<LinkSpec> = links
            .iter()
            .map(|&(a, b)| LinkSpec {
                a: gateway_mac(a),
                b: gateway_mac(b),
                latency: DEFAULT_LATENCY,
            })
            .collect();
        for g in 0..gateway_count {
            for slot in 0..consumers_per_gateway {
                let mac = edge_mac(g, slot);
                let role = if slot == 0 { Role::Publisher } else { Role::Consumer };
                nodes.push(Node { mac, role });
                specs.push(LinkSpec {
                    a: gateway_mac(g),
                    b: mac,
                    latency: DEFAULT_LATENCY,
                });
            }
        }
        Self::new(nodes, specs)
    }

    pub fn role(&self, mac: MacAddress) -> Option<Role> {
        self.nodes.iter().find(|n| n.mac == mac).map(|n| n.role)
    }

    pub fn gateways(&self) -> Vec<MacAddress> {
        self.nodes
            .iter()
            .filter(|n| n.role == Role::Gateway)
            .map(|n| n.mac)
            .collect()
    }

    pub fn edge_nodes(&self) -> Vec<MacAddress> {
        self.nodes
            .iter()
            .filter(|n| n.role != Role::Gateway)
            .map(|n| n.mac)
            .collect()
    }

    pub fn neighbors(&self, mac: MacAddress) -> impl Iterator<Item = MacAddress> + '_ {
        self.links.iter().filter_map(move |l| l.other(mac))
    }

    pub fn gateway_neighbors(&self, mac: MacAddress) -> Vec<MacAddress> {
        self.neighbors(mac)
            .filter(|m| self.role(*m) == Some(Role::Gateway))
            .collect()
    }

    /// Links whose endpoints are both gateways.
    pub fn gateway_links(&self) -> Vec<LinkSpec> {
        let gws: BTreeSet<MacAddress> = self.gateways().into_iter().collect();
        self.links
            .iter()
            .filter(|l| gws.contains(&l.a) && gws.contains(&l.b))
            .copied()
            .collect()
    }

    pub fn default_gateway(&self, edge: MacAddress) -> Option<MacAddress> {
        if self.role(edge)? == Role::Gateway {
            return Some(edge);
        }
        self.neighbors(edge)
            .find(|m| self.role(*m) == Some(Role::Gateway))
    }

    /// Edge nodes attached to `gateway`, publisher first.
    pub fn attached(&self, gateway: MacAddress) -> Vec<MacAddress> {
        let mut v: Vec<MacAddress> = self
            .neighbors(gateway)
            .filter(|m| matches!(self.role(*m), Some(Role::Consumer | Role::Publisher)))
            .collect();
        v.sort_by_key(|m| (self.role(*m) != Some(Role::Publisher), *m));
        v
    }

    pub fn publisher_of(&self, gateway: MacAddress) -> Option<MacAddress> {
        self.attached(gateway)
            .into_iter()
            .find(|m| self.role(*m) == Some(Role::Publisher))
    }

    pub fn max_latency(&self) -> SimTime {
        self.gateway_links()
            .iter()
            .map(|l| l.latency)
            .max()
            .unwrap_or(DEFAULT_LATENCY)
    }

    fn adjacency(&self, live: impl Fn(&LinkSpec) -> bool) -> BTreeMap<MacAddress, Vec<MacAddress>> {
        let mut adj: BTreeMap<MacAddress, Vec<MacAddress>> =
            self.gateways().into_iter().map(|g| (g, Vec::new())).collect();
        for l in self.gateway_links().iter().filter(|l| live(l)) {
            adj.get_mut(&l.a).unwrap().push(l.b);
            adj.get_mut(&l.b).unwrap().push(l.a);
        }
        adj
    }

    /// Connected components of the gateway graph restricted to links for
    /// which `live` holds. Components are sorted and listed by smallest MAC.
    pub fn components_with(&self, live: impl Fn(&LinkSpec) -> bool) -> Vec<BTreeSet<MacAddress>> {
        let adj = self.adjacency(live);
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(n) = queue.pop_front() {
                comp.insert(n);
                for &m in &adj[&n] {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components_with(|_| true).len() <= 1
    }

    /// Largest hop distance between any two gateways in the same component.
    pub fn diameter(&self) -> usize {
        let adj = self.adjacency(|_| true);
        let mut best = 0;
        for &start in adj.keys() {
            let mut dist = BTreeMap::from([(start, 0usize)]);
            let mut queue = VecDeque::from([start]);
            while let Some(n) = queue.pop_front() {
                let d = dist[&n];
                best = best.max(d);
                for &m in &adj[&n] {
                    if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(m) {
                        e.insert(d + 1);
                        queue.push_back(m);
                    }
                }
            }
        }
        best
    }

    /// One `mac_a mac_b latency` line per link.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for l in &self.links {
            let _ = writeln!(s, "{} {} {}", l.a, l.b, l.latency);
        }
        s
    }

    /// Inverse of [`to_edge_list`](Self::to_edge_list). Roles come from the
    /// MAC prefix; blank lines and `#` comments are skipped.
    pub fn from_edge_list(text: &str) -> Result<Self, TopologyError> {
        let mut nodes: BTreeMap<MacAddress, Role> = BTreeMap::new();
        let mut order = Vec::new();
        let mut links = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| TopologyError::Parse { line: i + 1, reason };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [a, b, lat] = parts[..] else {
                return Err(err(format!("expected 3 fields, got {}", parts.len())));
            };
            let mut ends = [MacAddress([0; 6]); 2];
            for (slot, field) in ends.iter_mut().zip([a, b]) {
                let mac: MacAddress = field.parse().map_err(|e| err(format!("{e}")))?;
                let role = role_of(mac).ok_or_else(|| err(format!("unknown role for {mac}")))?;
                if nodes.insert(mac, role).is_none() {
                    order.push(mac);
                }
                *slot = mac;
            }
            let latency = lat
                .parse()
                .map_err(|_| err(format!("bad latency {lat:?}")))?;
            links.push(LinkSpec {
                a: ends[0],
                b: ends[1],
                latency,
            });
        }
        let nodes = order
            .into_iter()
            .map(|mac| Node { mac, role: nodes[&mac] })
            .collect();
        Self::new(nodes, links)
    }
}

fn ordered(a: MacAddress, b: MacAddress) -> (MacAddress, MacAddress) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Random geometric mesh: gateways scattered on the unit square, each linked
/// to its nearest neighbours until every gateway has degree two (one when
/// there are only two gateways), then remaining components stitched together
/// through their closest pairs. Every gateway gets `consumers_per_gateway`
/// edge nodes, the first of which is its publisher.
pub fn build_topology(
    gateway_count: usize,
    consumers_per_gateway: usize,
    seed: u64,
) -> Result<Topology, TopologyError> {
    if gateway_count < 2 {
        return Err(TopologyError::TooFewGateways(gateway_count));
    }
    if gateway_count > u16::MAX as usize - 1 {
        return Err(TopologyError::TooManyGateways(gateway_count));
    }
    if consumers_per_gateway == 0 || consumers_per_gateway > 255 {
        return Err(TopologyError::BadEdgeCount(consumers_per_gateway));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<(f64, f64)> = (0..gateway_count)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let dist = |i: usize, j: usize| {
        let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
        dx * dx + dy * dy
    };

    let min_degree = 2.min(gateway_count - 1);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut degree = vec![0usize; gateway_count];
    let add = |edges: &mut BTreeSet<(usize, usize)>, degree: &mut [usize], i: usize, j: usize| {
        if edges.insert((i.min(j), i.max(j))) {
            degree[i] += 1;
            degree[j] += 1;
        }
    };
    for i in 0..gateway_count {
        let mut by_dist: Vec<usize> = (0..gateway_count).filter(|&j| j != i).collect();
        by_dist.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
        for &j in &by_dist {
            if degree[i] >= min_degree {
                break;
            }
            add(&mut edges, &mut degree, i, j);
        }
    }

    // stitch components
    loop {
        let comp = components(gateway_count, &edges);
        let count = comp.iter().max().map_or(0, |m| m + 1);
        if count <= 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..gateway_count).filter(|&i| comp[i] == 0) {
            for j in (0..gateway_count).filter(|&j| comp[j] != 0) {
                let d = dist(i, j);
                if best.is_none_or(|(bd, bi, bj)| (d, i, j) < (bd, bi, bj)) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("two components");
        add(&mut edges, &mut degree, i, j);
    }

    let pairs: Vec<(usize, usize)> = edges.into_iter().collect();
    Topology::with_links(gateway_count, &pairs, consumers_per_gateway)
}

fn components(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(v) = stack.pop() {
            for &(a, b) in edges {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(build_topology(10, 2, 7).unwrap(), build_topology(10, 2, 7).unwrap());
        assert_ne!(build_topology(10, 2, 7).unwrap(), build_topology(10, 2, 8).unwrap());
    }

    #[test]
    fn hundred_gateways() {
        let t = build_topology(100, 2, 3).unwrap();
        assert_eq!(t.gateways().len(), 100);
        assert_eq!(t.edge_nodes().len(), 200);
        assert!(t.is_connected());
        for g in t.gateways() {
            assert!(t.gateway_neighbors(g).len() >= 2);
            assert_eq!(t.attached(g).len(), 2);
            assert!(t.publisher_of(g).is_some());
        }
    }

    #[test]
    fn two_gateways_single_link() {
        let t = build_topology(2, 1, 0).unwrap();
        assert_eq!(t.gateway_links().len(), 1);
        assert_eq!(t.diameter(), 1);
    }

    #[test]
    fn too_few() {
        assert_eq!(build_topology(1, 2, 0), Err(TopologyError::TooFewGateways(1)));
    }

    #[test]
    fn edge_list_round_trip() {
        let t = build_topology(12, 3, 9).unwrap();
        let back = Topology::from_edge_list(&t.to_edge_list()).unwrap();
        assert_eq!(back.links, t.links);
        let mut a = back.nodes.clone();
        let mut b = t.nodes.clone();
        a.sort_by_key(|n| n.mac);
        b.sort_by_key(|n| n.mac);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        let dup = "02:00:00:00:00:01 02:00:00:00:00:02 1\n02:00:00:00:00:02 02:00:00:00:00:01 1\n";
        assert!(matches!(
            Topology::from_edge_list(dup),
            Err(TopologyError::DuplicateLink(..))
        ));
        assert!(matches!(
            Topology::from_edge_list("02:00:00:00:00:01 x 1"),
            Err(TopologyError::Parse { line: 1, .. })
        ));
    }
}
