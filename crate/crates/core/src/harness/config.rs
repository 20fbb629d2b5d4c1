use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::cache::{Policy, DEFAULT_POPULARITY_THRESHOLD};
use crate::identity::MacAddress;
use crate::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionStep {
    pub at: SimTime,
    pub enable: bool,
    pub links: Vec<(MacAddress, MacAddress)>,
}

/// One scenario. Keys in the config file match the field names.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub gateway_count: usize,
    /// Edge nodes per gateway, one of which is the publisher.
    pub consumers_per_gateway: usize,
    pub corpus_size: usize,
    pub object_size_bytes: usize,
    pub popular_set_size: usize,
    pub popularity_fraction: f64,
    pub requests_per_gateway: usize,
    pub policy: Policy,
    pub capacity_bytes: u64,
    pub popularity_threshold: u64,
    pub block_interval: SimTime,
    pub partition: Vec<PartitionStep>,
    pub seed: u64,
    /// Mean spacing between consecutive requests at one gateway.
    pub request_interval: SimTime,
    /// Requests per gateway between metric samples.
    pub sample_interval: usize,
    pub max_block_txs: usize,
    pub route_hints: bool,
    pub hint_capacity: usize,
    pub hint_ttl: SimTime,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            gateway_count: 10,
            consumers_per_gateway: 2,
            corpus_size: 1000,
            object_size_bytes: 64 * 1024,
            popular_set_size: 50,
            popularity_fraction: 0.6,
            requests_per_gateway: 2000,
            policy: Policy::Popularity,
            capacity_bytes: 3_355_443, // 3.2 MiB
            popularity_threshold: DEFAULT_POPULARITY_THRESHOLD,
            block_interval: 100,
            partition: Vec::new(),
            seed: 42,
            request_interval: 10,
            sample_interval: 100,
            max_block_txs: crate::ledger::DEFAULT_MAX_BLOCK_TXS,
            route_hints: true,
            hint_capacity: 4096,
            hint_ttl: 50_000,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "gateway_count",
    "consumers_per_gateway",
    "corpus_size",
    "object_size_bytes",
    "popular_set_size",
    "popularity_fraction",
    "requests_per_gateway",
    "policy",
    "capacity_bytes",
    "popularity_threshold",
    "block_interval",
    "partition",
    "seed",
    "request_interval",
    "sample_interval",
    "max_block_txs",
    "route_hints",
    "hint_capacity",
    "hint_ttl",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

/// `<time> <disable|enable> <mac>-<mac>, ...` steps separated by `;`.
pub fn parse_partition(value: &str) -> Result<Vec<PartitionStep>, ConfigError> {
    let bad = |reason: &str| ConfigError::BadValue {
        key: "partition".into(),
        value: value.into(),
        reason: reason.into(),
    };
    let mut steps = Vec::new();
    for step in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let mut parts = step.splitn(3, char::is_whitespace);
        let at = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("step must start with a time"))?;
        let enable = match parts.next() {
            Some("disable") => false,
            Some("enable") => true,
            _ => return Err(bad("expected `disable` or `enable`")),
        };
        let mut links = Vec::new();
        for l in parts.next().unwrap_or("").split(',').map(str::trim) {
            let (a, b) = l.split_once('-').ok_or_else(|| bad("link must be mac-mac"))?;
            let a = a.trim().parse().map_err(|_| bad("bad mac"))?;
            let b = b.trim().parse().map_err(|_| bad("bad mac"))?;
            links.push((a, b));
        }
        steps.push(PartitionStep { at, enable, links });
    }
    Ok(steps)
}

fn format_partition(steps: &[PartitionStep]) -> String {
    steps
        .iter()
        .map(|s| {
            let links: Vec<String> = s.links.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            format!(
                "{} {} {}",
                s.at,
                if s.enable { "enable" } else { "disable" },
                links.join(",")
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl ScenarioConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "gateway_count" => self.gateway_count = parse_num(key, v)?,
            "consumers_per_gateway" => self.consumers_per_gateway = parse_num(key, v)?,
            "corpus_size" => self.corpus_size = parse_num(key, v)?,
            "object_size_bytes" => self.object_size_bytes = parse_num(key, v)?,
            "popular_set_size" => self.popular_set_size = parse_num(key, v)?,
            "popularity_fraction" => self.popularity_fraction = parse_num(key, v)?,
            "requests_per_gateway" => self.requests_per_gateway = parse_num(key, v)?,
            "policy" => self.policy = parse_num(key, v)?,
            "capacity_bytes" => self.capacity_bytes = parse_num(key, v)?,
            "popularity_threshold" => self.popularity_threshold = parse_num(key, v)?,
            "block_interval" => self.block_interval = parse_num(key, v)?,
            "partition" => self.partition = parse_partition(v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "request_interval" => self.request_interval = parse_num(key, v)?,
            "sample_interval" => self.sample_interval = parse_num(key, v)?,
            "max_block_txs" => self.max_block_txs = parse_num(key, v)?,
            "route_hints" => self.route_hints = parse_num(key, v)?,
            "hint_capacity" => self.hint_capacity = parse_num(key, v)?,
            "hint_ttl" => self.hint_ttl = parse_num(key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.into(),
                })
            }
        }
        Ok(())
    }

    /// Parses flat `key = value` text on top of the defaults. `#` starts a
    /// comment line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (line, key, value) in config_lines(text)? {
            cfg.set(&key, &value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
                e => e,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("gateway_count", self.gateway_count as u64),
            ("consumers_per_gateway", self.consumers_per_gateway as u64),
            ("corpus_size", self.corpus_size as u64),
            ("object_size_bytes", self.object_size_bytes as u64),
            ("requests_per_gateway", self.requests_per_gateway as u64),
            ("capacity_bytes", self.capacity_bytes),
            ("block_interval", self.block_interval),
            ("request_interval", self.request_interval),
            ("sample_interval", self.sample_interval as u64),
            ("max_block_txs", self.max_block_txs as u64),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{k} must be positive")));
            }
        }
        if self.gateway_count < 2 {
            return Err(ConfigError::Invalid("gateway_count must be at least 2".into()));
        }
        if self.popular_set_size > self.corpus_size {
            return Err(ConfigError::Invalid(
                "popular_set_size exceeds corpus_size".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.popularity_fraction) {
            return Err(ConfigError::Invalid(
                "popularity_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.popular_set_size == 0 && self.popularity_fraction > 0.0 {
            return Err(ConfigError::Invalid(
                "empty popular set with popularity_fraction > 0".into(),
            ));
        }
        if self.popular_set_size == self.corpus_size && self.popularity_fraction < 1.0 {
            return Err(ConfigError::Invalid(
                "no unpopular objects but popularity_fraction < 1".into(),
            ));
        }
        Ok(())
    }

    /// Writes the config back in the format [`parse`](Self::parse) reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("gateway_count", self.gateway_count.to_string());
        put("consumers_per_gateway", self.consumers_per_gateway.to_string());
        put("corpus_size", self.corpus_size.to_string());
        put("object_size_bytes", self.object_size_bytes.to_string());
        put("popular_set_size", self.popular_set_size.to_string());
        put("popularity_fraction", self.popularity_fraction.to_string());
        put("requests_per_gateway", self.requests_per_gateway.to_string());
        put("policy", self.policy.name().to_ascii_lowercase());
        put("capacity_bytes", self.capacity_bytes.to_string());
        put("popularity_threshold", self.popularity_threshold.to_string());
        put("block_interval", self.block_interval.to_string());
        if !self.partition.is_empty() {
            put("partition", format_partition(&self.partition));
        }
        put("seed", self.seed.to_string());
        put("request_interval", self.request_interval.to_string());
        put("sample_interval", self.sample_interval.to_string());
        put("max_block_txs", self.max_block_txs.to_string());
        put("route_hints", self.route_hints.to_string());
        put("hint_capacity", self.hint_capacity.to_string());
        put("hint_ttl", self.hint_ttl.to_string());
        s
    }
}

pub(crate) fn config_lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or(ConfigError::Syntax(line))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax(line));
        }
        if !seen.insert(k.to_string()) {
            return Err(ConfigError::DuplicateKey { line, key: k.into() });
        }
        out.push((line, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// A sweep: a base config where any key except `partition` may list
/// comma-separated alternatives, plus a `seeds` list.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub configs: Vec<ScenarioConfig>,
    pub seeds: Vec<u64>,
}

impl Sweep {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        let mut base = ScenarioConfig::default();
        let mut seeds = vec![base.seed];
        for (line, key, value) in config_lines(text)? {
            if key == "seeds" {
                seeds = value
                    .split(',')
                    .map(|s| parse_num("seeds", s.trim()))
                    .collect::<Result<_, _>>()?;
            } else if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { line, key });
            } else if key == "partition" {
                base.set(&key, &value)?;
            } else {
                let alts: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                axes.push((key, alts));
            }
        }
        let mut configs = vec![base];
        for (key, alts) in &axes {
            let mut next = Vec::new();
            for c in &configs {
                for a in alts {
                    let mut c = c.clone();
                    c.set(key, a)?;
                    next.push(c);
                }
            }
            configs = next;
        }
        Ok(Self { configs, seeds })
    }
}
