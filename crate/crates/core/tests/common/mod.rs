#![allow(dead_code)]

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use dweb::cache::{CacheConfig, Policy};
use dweb::gateway::GatewayConfig;
use dweb::identity::{MacAddress, Metadata, Object};
use dweb::simnet::{edge_mac, gateway_mac, Network, NetworkConfig, Topology};

pub const BLOCK: u64 = 50;

pub fn net_config(policy: Policy, hints: bool) -> NetworkConfig {
    NetworkConfig {
        gateway: GatewayConfig {
            cache: CacheConfig {
                capacity_bytes: 64 * 1024,
                policy,
                popularity_threshold: 3,
            },
            max_block_txs: 100,
            hint_capacity: 1024,
            hint_ttl: 100_000,
            seen_capacity: 1 << 14,
        },
        block_interval: BLOCK,
        use_route_hints: hints,
        timeout: None,
        authority_seed: 11,
        record_traces: true,
    }
}

/// Gateways `0..n` with the given links and one publisher each.
pub fn network(n: usize, links: &[(usize, usize)], hints: bool) -> Network {
    let topo = Topology::with_links(n, links, 1).unwrap();
    Network::new(topo, net_config(Policy::Lru, hints))
}

pub fn gw(i: usize) -> MacAddress {
    gateway_mac(i)
}

pub fn publisher(i: usize) -> MacAddress {
    edge_mac(i, 0)
}

pub fn meta(name: &str, keywords: &[&str], publisher: MacAddress, size: usize) -> Metadata {
    Metadata {
        name: name.into(),
        keywords: keywords.iter().map(|k| k.to_string()).collect(),
        publisher,
        created_at: 0,
        size_bytes: size as u64,
    }
}

pub fn payload(tag: &str, size: usize) -> Vec<u8> {
    tag.bytes().cycle().take(size).collect()
}

pub fn object(tag: &str, size: usize) -> Object {
    Object::new(payload(tag, size), meta(tag, &[], publisher(0), size)).unwrap()
}

/// Puts `obj` straight into the caches of the listed gateways.
pub fn seed_caches(net: &mut Network, obj: &Object, holders: &[usize]) {
    let now = net.now();
    for &h in holders {
        net.gateway_mut(gw(h))
            .unwrap()
            .cache_mut()
            .insert(obj.clone(), now);
    }
}

/// Gateway adjacency of a topology.
pub fn adjacency(topo: &Topology) -> BTreeMap<MacAddress, BTreeSet<MacAddress>> {
    let mut adj: BTreeMap<MacAddress, BTreeSet<MacAddress>> = BTreeMap::new();
    for g in topo.gateways() {
        adj.entry(g).or_default();
    }
    for l in topo.gateway_links() {
        adj.get_mut(&l.a).unwrap().insert(l.b);
        adj.get_mut(&l.b).unwrap().insert(l.a);
    }
    adj
}

/// Interest transmissions one flood must cost: the origin sends to all its
/// neighbours, and every other reached non-holder relays once to all
/// neighbours but the arrival hop. Holders answer and stop. The total does
/// not depend on arrival order.
pub fn flood_cost(
    adj: &BTreeMap<MacAddress, BTreeSet<MacAddress>>,
    origin: MacAddress,
    holders: &BTreeSet<MacAddress>,
) -> u64 {
    let mut reached = BTreeSet::from([origin]);
    let mut queue = VecDeque::from([origin]);
    let mut cost = adj[&origin].len() as u64;
    while let Some(n) = queue.pop_front() {
        if n != origin && holders.contains(&n) {
            continue;
        }
        for &m in &adj[&n] {
            if reached.insert(m) {
                if !holders.contains(&m) {
                    cost += adj[&m].len() as u64 - 1;
                }
                queue.push_back(m);
            }
        }
    }
    cost
}
