use std::path::PathBuf;

use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at {fire_at} but clock is already at {now}")]
    SchedulingInPast { fire_at: SimTime, now: SimTime },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid topology parameter: {0}")]
    InvalidParameter(String),
    #[error("host {host} out of range (topology has {hosts} hosts)")]
    InvalidHost { host: u32, hosts: u32 },
    #[error("source and destination are both host {0}")]
    SelfRoute(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FabricError {
    #[error("link busy until {busy_until}, transmission requested at {start}")]
    LinkBusy { busy_until: SimTime, start: SimTime },
    #[error(
        "buffer overflow at switch {switch} input {port}: {occupancy} + {size} bytes exceeds limit {limit}"
    )]
    BufferOverflow {
        switch: u32,
        port: u32,
        occupancy: u64,
        size: u64,
        limit: u64,
    },
    #[error("packet {packet_id} for host {expected} delivered to host {actual}")]
    MisroutedPacket {
        packet_id: u64,
        expected: u32,
        actual: u32,
    },
    #[error("switch {switch} accounting audit failed: {detail}")]
    AuditFailure { switch: u32, detail: String },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown flow {0}")]
    UnknownFlow(u32),
    #[error("flow {0} never delivered a packet")]
    NoDeliveries(u32),
    #[error("no flow delivered a packet")]
    NothingDelivered,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}: parse error: {source}")]
    Parse {
        origin: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that can abort a simulation run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
