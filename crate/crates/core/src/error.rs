use thiserror::Error;

use crate::model::{LinkId, NodeId, RequestId};

/// Errors from resource-state mutation and substrate construction.
///
/// `SlotConflict` and `ComputeOverflow` mean a mapper proposed an infeasible
/// mapping, which is a logic bug rather than a blocking event.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("slot {slot} on core {core} of link {link} is already owned", core = .core + 1)]
    SlotConflict { link: LinkId, core: usize, slot: usize },
    #[error("node {node} cannot take {requested} compute units (residual {residual})")]
    ComputeOverflow { node: NodeId, requested: u32, residual: u32 },
    #[error("request {0} is not reserved")]
    UnknownRequest(RequestId),
    #[error("request {0} is already reserved")]
    DuplicateRequest(RequestId),
    #[error("node {0} is not compute-capable")]
    NotComputeCapable(NodeId),
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("no path between {0} and {1}")]
    NoPath(NodeId, NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown strategy `{0}` (known: dpsm, dpsm-b, wmsm, wmsm-b, sorted, greedy)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Resource(#[from] ResourceError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("strategy {strategy} produced an unreservable mapping for {request}: {source}")]
    Reserve { strategy: String, request: RequestId, source: ResourceError },
    #[error("strategy {strategy} violated constraints on {request}: {details}")]
    ConstraintViolation { strategy: String, request: RequestId, details: String },
    #[error("run did not restore the initial state after draining")]
    NotRestored,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    #[error("blocking ratio is undefined with zero requests")]
    DivisionByZeroGuard,
}
