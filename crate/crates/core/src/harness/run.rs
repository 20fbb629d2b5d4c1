use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig};
use super::metrics::RunMetrics;
use super::workload::{generate_workload, Corpus};
use crate::cache::{CacheConfig, Policy};
use crate::gateway::GatewayConfig;
use crate::simnet::{build_topology, MessageKind, Network, NetworkConfig, NetworkError, TopologyError};
use crate::SimTime;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

pub fn network_config(config: &ScenarioConfig) -> NetworkConfig {
    NetworkConfig {
        gateway: GatewayConfig {
            cache: CacheConfig {
                capacity_bytes: config.capacity_bytes,
                policy: config.policy,
                popularity_threshold: config.popularity_threshold,
            },
            max_block_txs: config.max_block_txs,
            hint_capacity: config.hint_capacity,
            hint_ttl: config.hint_ttl,
            seen_capacity: 1 << 16,
        },
        block_interval: config.block_interval,
        use_route_hints: config.route_hints,
        timeout: None,
        authority_seed: config.seed,
        record_traces: false,
    }
}

/// A scenario after bootstrap and corpus publication, before any request.
pub struct Prepared {
    pub network: Network,
    pub corpus: Corpus,
    /// Time at which the workload begins.
    pub start: SimTime,
}

/// Builds the topology and network, schedules the partition steps, and
/// publishes the corpus, running long enough for every registration to be
/// committed on a connected network.
pub fn prepare(config: &ScenarioConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let topology = build_topology(config.gateway_count, config.consumers_per_gateway, config.seed)?;
    let corpus = Corpus::generate(config, &topology)?;
    let mut network = Network::new(topology, network_config(config));
    for step in &config.partition {
        network.schedule_link_change(step.at, step.enable, &step.links)?;
    }
    for (obj, &publisher) in corpus.objects.iter().zip(&corpus.publishers) {
        network.publish(publisher, obj.payload().to_vec(), (**obj.metadata()).clone())?;
    }
    let blocks = config.corpus_size.div_ceil(config.max_block_txs) as SimTime + 2;
    let start = blocks * config.block_interval + config.block_interval / 2;
    network.run_until(start);
    Ok(Prepared {
        network,
        corpus,
        start,
    })
}

/// Runs one scenario to completion and returns its metrics.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunMetrics, HarnessError> {
    let Prepared {
        mut network,
        corpus,
        start,
    } = prepare(config)?;
    let workload = generate_workload(config, network.topology(), &corpus, start)?;
    let mut per_gateway: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for r in &workload {
        let idx = network.schedule_request(r.time, r.consumer, r.link.oid)?;
        per_gateway.entry(r.gateway).or_default().push(idx);
    }
    let end = workload.last().map_or(start, |r| r.time);
    network.run_until_idle(end + 8 * network.timeout() + 1);
    network.run_for(2 * config.block_interval);

    let outcomes = per_gateway
        .into_iter()
        .map(|(g, idxs)| {
            let list = idxs
                .iter()
                .map(|&i| {
                    network
                        .request(i)
                        .outcome
                        .unwrap_or(crate::simnet::RequestOutcome::Timeout)
                })
                .collect();
            (g, list)
        })
        .collect();
    Ok(RunMetrics {
        policy: config.policy,
        gateway_count: config.gateway_count,
        seed: config.seed,
        sample_interval: config.sample_interval,
        outcomes,
        messages: MessageKind::ALL
            .iter()
            .map(|&k| (k, network.messages_sent(k)))
            .collect(),
        messages_dropped: network.messages_dropped(),
        chain_weights: network
            .gateways()
            .iter()
            .map(|g| (g.mac(), g.chain().weight()))
            .collect(),
        trace_hash: network.trace_hash(),
    })
}

/// Writes `metrics.csv`, `summary.csv` and `config.txt` into `dir`.
pub fn write_outputs(config: &ScenarioConfig, metrics: &RunMetrics, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics.to_csv())?;
    std::fs::write(dir.join("summary.csv"), metrics.summary_csv())?;
    std::fs::write(dir.join("config.txt"), config.to_text())?;
    Ok(())
}

#[derive(Debug)]
pub struct MatrixCell {
    pub config_index: usize,
    pub policy: Policy,
    pub gateways: usize,
    pub seed: u64,
    pub result: Result<RunMetrics, HarnessError>,
}

impl MatrixCell {
    pub fn final_hit_ratio(&self) -> Option<f64> {
        self.result.as_ref().ok().and_then(|m| m.final_hit_ratio())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub policy: Policy,
    pub gateways: usize,
    pub seed_count: usize,
    pub mean_final_hit_ratio: f64,
    pub stddev: f64,
}

#[derive(Debug)]
pub struct MatrixResult {
    pub cells: Vec<MatrixCell>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (config, seed) pair, concurrently. A failing cell keeps its
/// error; the rest of the matrix still runs. With `out`, each cell writes
/// its CSVs into its own subdirectory and the matrix writes `cells.csv` and
/// `aggregate.csv`.
pub fn run_matrix(
    configs: &[ScenarioConfig],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<MatrixResult, HarnessError> {
    let jobs: Vec<(usize, ScenarioConfig)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            seeds.iter().map(move |&s| {
                (
                    i,
                    ScenarioConfig {
                        seed: s,
                        ..c.clone()
                    },
                )
            })
        })
        .collect();
    let cells: Vec<MatrixCell> = jobs
        .into_par_iter()
        .map(|(i, cfg)| {
            let result = run_scenario(&cfg).and_then(|m| {
                if let Some(dir) = out {
                    let name = format!(
                        "{}-{}gw-seed{}-c{i}",
                        cfg.policy.name().to_ascii_lowercase(),
                        cfg.gateway_count,
                        cfg.seed
                    );
                    write_outputs(&cfg, &m, &dir.join(name))?;
                }
                Ok(m)
            });
            MatrixCell {
                config_index: i,
                policy: cfg.policy,
                gateways: cfg.gateway_count,
                seed: cfg.seed,
                result,
            }
        })
        .collect();

    let mut aggregates = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let vals: Vec<f64> = cells
            .iter()
            .filter(|cell| cell.config_index == i)
            .filter_map(MatrixCell::final_hit_ratio)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let (mean, sd) = mean_stddev(&vals);
        aggregates.push(Aggregate {
            policy: c.policy,
            gateways: c.gateway_count,
            seed_count: vals.len(),
            mean_final_hit_ratio: mean,
            stddev: sd,
        });
    }
    let result = MatrixResult { cells, aggregates };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cells.csv"), result.cells_csv())?;
        std::fs::write(dir.join("aggregate.csv"), result.aggregate_csv())?;
    }
    Ok(result)
}

impl MatrixResult {
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("config,policy,gateways,seed,final_hit_ratio,error\n");
        for c in &self.cells {
            let (ratio, err) = match &c.result {
                Ok(m) => (
                    m.final_hit_ratio().map(|r| format!("{r:.6}")).unwrap_or_default(),
                    String::new(),
                ),
                Err(e) => (String::new(), e.to_string().replace([',', '\n'], ";")),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{ratio},{err}",
                c.config_index, c.policy, c.gateways, c.seed
            );
        }
        s
    }

    /// `policy, gateways, seed_count, mean_final_hit_ratio, stddev`
    pub fn aggregate_csv(&self) -> String {
        let mut s = String::from("policy,gateways,seed_count,mean_final_hit_ratio,stddev\n");
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6}",
                a.policy, a.gateways, a.seed_count, a.mean_final_hit_ratio, a.stddev
            );
        }
        s
    }
}
