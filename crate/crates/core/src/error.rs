use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("empty cluster")]
    EmptyCluster,

    #[error("invalid cluster: {}", .0.join("; "))]
    InvalidCluster(Vec<String>),

    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("non-positive latency on ({0},{1})")]
    NonPositiveLatency(NodeId, NodeId),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("insufficient aggregate memory: fleet has {available:.1} GB, tasks need {required:.1} GB")]
    InsufficientMemory { available: f64, required: f64 },

    #[error("too few machines: {nodes} nodes for {tasks} tasks")]
    TooFewNodes { nodes: usize, tasks: usize },

    #[error("machines {0} and {1} cannot communicate")]
    Unreachable(NodeId, NodeId),

    #[error("no eligible machines for task {0}")]
    NoEligibleMachines(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
