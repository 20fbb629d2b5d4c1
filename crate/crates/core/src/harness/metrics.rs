use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cache::Policy;
use crate::identity::MacAddress;
use crate::simnet::{MessageKind, RequestOutcome};

/// Cumulative counters for one gateway after `sample_requests` requests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Sample {
    pub sample_requests: u64,
    pub hits_local: u64,
    pub hits_remote: u64,
    pub producer_fetches: u64,
    pub failures: u64,
}

impl Sample {
    pub fn hits(&self) -> u64 {
        self.hits_local + self.hits_remote
    }

    pub fn hit_ratio(&self) -> Option<f64> {
        (self.sample_requests > 0).then(|| self.hits() as f64 / self.sample_requests as f64)
    }

    fn add(&mut self, o: RequestOutcome) {
        self.sample_requests += 1;
        match o {
            RequestOutcome::LocalHit => self.hits_local += 1,
            RequestOutcome::RemoteHit => self.hits_remote += 1,
            RequestOutcome::ProducerFetch => self.producer_fetches += 1,
            RequestOutcome::IntegrityFailure | RequestOutcome::Timeout => self.failures += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub policy: Policy,
    pub gateway_count: usize,
    pub seed: u64,
    pub sample_interval: usize,
    /// Per-gateway request outcomes in issue order.
    pub outcomes: BTreeMap<MacAddress, Vec<RequestOutcome>>,
    pub messages: Vec<(MessageKind, u64)>,
    pub messages_dropped: u64,
    pub chain_weights: BTreeMap<MacAddress, u64>,
    pub trace_hash: [u8; 32],
}

/// Hit ratio over the first `upto_requests` requests via `gateway`; `None`
/// when that window is empty or the gateway is unknown.
pub fn hit_ratio(metrics: &RunMetrics, gateway: MacAddress, upto_requests: usize) -> Option<f64> {
    metrics.prefix(gateway, upto_requests)?.hit_ratio()
}

impl RunMetrics {
    pub fn prefix(&self, gateway: MacAddress, upto: usize) -> Option<Sample> {
        let list = self.outcomes.get(&gateway)?;
        let mut s = Sample::default();
        for &o in list.iter().take(upto) {
            s.add(o);
        }
        Some(s)
    }

    /// Samples every `sample_interval` requests, plus a final partial one.
    pub fn samples(&self, gateway: MacAddress) -> Vec<Sample> {
        let Some(list) = self.outcomes.get(&gateway) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut s = Sample::default();
        for (i, &o) in list.iter().enumerate() {
            s.add(o);
            if (i + 1) % self.sample_interval == 0 || i + 1 == list.len() {
                out.push(s);
            }
        }
        out
    }

    pub fn totals(&self) -> Sample {
        let mut s = Sample::default();
        for list in self.outcomes.values() {
            for &o in list {
                s.add(o);
            }
        }
        s
    }

    /// Hits over requests, all gateways pooled.
    pub fn final_hit_ratio(&self) -> Option<f64> {
        self.totals().hit_ratio()
    }

    pub fn local_hit_ratio(&self) -> Option<f64> {
        let t = self.totals();
        (t.sample_requests > 0).then(|| t.hits_local as f64 / t.sample_requests as f64)
    }

    /// Mean over gateways of the cumulative hit ratio at each sample index.
    pub fn mean_curve(&self) -> Vec<(u64, f64)> {
        let per: Vec<Vec<Sample>> = self.outcomes.keys().map(|g| self.samples(*g)).collect();
        let len = per.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|i| {
                let ratios: Vec<f64> = per.iter().filter_map(|s| s[i].hit_ratio()).collect();
                let x = per[0][i].sample_requests;
                (x, ratios.iter().sum::<f64>() / ratios.len().max(1) as f64)
            })
            .collect()
    }

    /// `gateway_mac, sample_requests, hits_local, hits_remote,
    /// producer_fetches, failures, hit_ratio`
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("gateway_mac,sample_requests,hits_local,hits_remote,producer_fetches,failures,hit_ratio\n");
        for g in self.outcomes.keys() {
            for smp in self.samples(*g) {
                let _ = writeln!(
                    s,
                    "{g},{},{},{},{},{},{}",
                    smp.sample_requests,
                    smp.hits_local,
                    smp.hits_remote,
                    smp.producer_fetches,
                    smp.failures,
                    smp.hit_ratio().map(|r| format!("{r:.6}")).unwrap_or_default()
                );
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let t = self.totals();
        let fmt = |r: Option<f64>| r.map(|r| format!("{r:.6}")).unwrap_or_default();
        let mut s = String::from("key,value\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k},{v}");
        };
        put("policy", self.policy.name().into());
        put("gateways", self.gateway_count.to_string());
        put("seed", self.seed.to_string());
        put("requests", t.sample_requests.to_string());
        put("hits_local", t.hits_local.to_string());
        put("hits_remote", t.hits_remote.to_string());
        put("producer_fetches", t.producer_fetches.to_string());
        put("failures", t.failures.to_string());
        put("final_hit_ratio", fmt(self.final_hit_ratio()));
        put("local_hit_ratio", fmt(self.local_hit_ratio()));
        let w_min = self.chain_weights.values().min().copied().unwrap_or(0);
        let w_max = self.chain_weights.values().max().copied().unwrap_or(0);
        put("chain_weight_min", w_min.to_string());
        put("chain_weight_max", w_max.to_string());
        for (k, n) in &self.messages {
            put(&format!("messages_{k:?}").to_ascii_lowercase(), n.to_string());
        }
        put("messages_dropped", self.messages_dropped.to_string());
        put("trace_hash", hex::encode(self.trace_hash));
        s
    }
}
