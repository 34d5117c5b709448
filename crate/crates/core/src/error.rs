use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimensions {height}x{width} overflow the node index space")]
    DimensionOverflow { height: usize, width: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid edge list: {0}")]
    InvalidEdges(String),
    #[error("node {node} is out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("subset is empty")]
    EmptySubset,
    #[error("graph has no grid metadata")]
    MissingGrid,
    #[error("subset of {size} nodes is not tractable (induced subgraph has a cycle)")]
    Intractable { size: usize },
    #[error("operation requires a tree-shaped subset")]
    NotATree,
    #[error("{what}: expected {expected} values, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("spin values must be -1 or +1, found {0}")]
    InvalidSpin(i8),
    #[error("neighbor {neighbor} of node {node} is unassigned")]
    UnassignedNeighbor { node: NodeId, neighbor: NodeId },
    #[error("enumeration over {size} variables exceeds the brute-force limit of {limit}")]
    TooLargeForEnumeration { size: usize, limit: usize },
    #[error("parameter {0} is not finite")]
    NonFiniteParameter(usize),
    #[error("invalid parameter tying: {0}")]
    InvalidTying(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("sample file line {line}: {message}")]
    SampleFile { line: usize, message: String },
    #[error("bitstream: {0}")]
    Bitstream(String),
    #[error("{which} digest mismatch (stream {stream:016x}, expected {expected:016x})")]
    DigestMismatch {
        which: &'static str,
        stream: u64,
        expected: u64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
