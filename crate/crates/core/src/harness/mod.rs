//! Workload generation, scenario orchestration, metrics, and CSV output.

mod config;
mod metrics;
mod run;
mod workload;

pub use config::{parse_partition, ConfigError, PartitionStep, ScenarioConfig, Sweep, CONFIG_KEYS};
pub use metrics::{hit_ratio, RunMetrics, Sample};
pub use run::{
    mean_stddev, network_config, prepare, run_matrix, run_scenario, write_outputs, Aggregate, HarnessError,
    MatrixCell, MatrixResult, Prepared,
};
pub use workload::{generate_workload, popular_share, Corpus, WorkloadRequest};
