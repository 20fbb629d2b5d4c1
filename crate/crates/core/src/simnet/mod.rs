//! Discrete-event mesh simulator: topology generation, the event queue,
//! link state and partitions, and the consumer request lifecycle.

mod engine;
mod message;
mod network;
mod topology;

pub use engine::{run_until, Engine};
pub use message::{InterestMode, InterestRequest, Message, MessageKind, ObjectResponse, SeenSet, ServedFrom};
pub use network::{
    gateway_keys, ConsumeError, Network, NetworkConfig, NetworkError, RequestOutcome, RequestRecord, Traces,
};
pub use topology::{
    build_topology, edge_mac, gateway_mac, role_of, LinkSpec, Node, Role, Topology, TopologyError, DEFAULT_LATENCY,
};
