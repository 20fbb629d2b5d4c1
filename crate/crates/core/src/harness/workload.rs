use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConfigError, ScenarioConfig};
use crate::gateway::Link;
use crate::identity::{MacAddress, Metadata, Object};
use crate::simnet::Topology;
use crate::SimTime;

/// The objects a scenario publishes, with the publisher of each and the
/// ground-truth popular set. Only the workload generator reads `popular`.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub objects: Vec<Object>,
    pub publishers: Vec<MacAddress>,
    pub popular: Vec<usize>,
    pub unpopular: Vec<usize>,
}

impl Corpus {
    /// Deterministic from the config seed. Objects go round-robin to the
    /// gateways' publishers.
    pub fn generate(config: &ScenarioConfig, topology: &Topology) -> Result<Self, ConfigError> {
        let publishers: Vec<MacAddress> = topology
            .gateways()
            .into_iter()
            .filter_map(|g| topology.publisher_of(g))
            .collect();
        if publishers.is_empty() {
            return Err(ConfigError::Invalid("topology has no publishers".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xc0_4b_05);
        let mut objects = Vec::with_capacity(config.corpus_size);
        let mut owners = Vec::with_capacity(config.corpus_size);
        for i in 0..config.corpus_size {
            let publisher = publishers[i % publishers.len()];
            let mut payload = vec![0u8; config.object_size_bytes];
            rng.fill_bytes(&mut payload);
            let metadata = Metadata {
                name: format!("object-{i}"),
                keywords: vec![format!("obj{i}"), format!("topic{}", i % 16), "corpus".into()],
                publisher,
                created_at: 0,
                size_bytes: payload.len() as u64,
            };
            objects.push(Object::new(payload, metadata).map_err(|e| ConfigError::Invalid(e.to_string()))?);
            owners.push(publisher);
        }
        let mut order: Vec<usize> = (0..config.corpus_size).collect();
        order.shuffle(&mut rng);
        let mut popular = order[..config.popular_set_size].to_vec();
        let mut unpopular = order[config.popular_set_size..].to_vec();
        popular.sort_unstable();
        unpopular.sort_unstable();
        Ok(Self {
            objects,
            publishers: owners,
            popular,
            unpopular,
        })
    }

    pub fn link(&self, index: usize) -> Link {
        let o = &self.objects[index];
        Link {
            oid: o.oid,
            metadata: o.metadata().clone(),
        }
    }

    pub fn is_popular(&self, index: usize) -> bool {
        self.popular.binary_search(&index).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadRequest {
    pub time: SimTime,
    pub consumer: MacAddress,
    pub gateway: MacAddress,
    pub object: usize,
    pub link: Link,
    pub popular: bool,
}

/// Requests for every gateway, `requests_per_gateway` each, starting at
/// `start`. Request k of a gateway lands uniformly inside slot
/// `[start + k*interval, start + (k+1)*interval)`; each targets the popular
/// set with probability `popularity_fraction`, uniform within its class, and
/// comes from a uniformly chosen edge node of that gateway. Sorted by time.
pub fn generate_workload(
    config: &ScenarioConfig,
    topology: &Topology,
    corpus: &Corpus,
    start: SimTime,
) -> Result<Vec<WorkloadRequest>, ConfigError> {
    if corpus.popular.is_empty() && config.popularity_fraction > 0.0 {
        return Err(ConfigError::Invalid("empty popular set with p > 0".into()));
    }
    if corpus.unpopular.is_empty() && config.popularity_fraction < 1.0 {
        return Err(ConfigError::Invalid("empty unpopular set with p < 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0077_0a4d);
    let interval = config.request_interval;
    let mut out = Vec::new();
    for g in topology.gateways() {
        let mut edges = topology.attached(g);
        if edges.is_empty() {
            edges.push(g);
        }
        for k in 0..config.requests_per_gateway {
            let time = start + k as SimTime * interval + rng.random_range(0..interval);
            let consumer = edges[rng.random_range(0..edges.len())];
            let popular = rng.random_bool(config.popularity_fraction);
            let class = if popular { &corpus.popular } else { &corpus.unpopular };
            let object = class[rng.random_range(0..class.len())];
            out.push(WorkloadRequest {
                time,
                consumer,
                gateway: g,
                object,
                link: corpus.link(object),
                popular,
            });
        }
    }
    out.sort_by_key(|r| (r.time, r.gateway, r.consumer));
    Ok(out)
}

/// Fraction of requests that target the popular set.
pub fn popular_share(workload: &[WorkloadRequest]) -> Option<f64> {
    if workload.is_empty() {
        return None;
    }
    Some(workload.iter().filter(|r| r.popular).count() as f64 / workload.len() as f64)
}
