//! Slice embedding on multi-core elastic optical networks: substrate model,
//! routing, spectrum assignment, provisioning strategies, and a dynamic
//! traffic simulator.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod routing;
pub mod sim;
pub mod spectrum;
pub mod strategy;

pub use error::{ConfigError, MetricsError, ResourceError, RoutingError, SimError};
pub use model::{
    BlockReason, ComputePlacement, CoreGroups, Graph, LinkId, Mapping, MappingResult, NodeId, RequestId,
    SegmentAllocation, SliceRequest, SlotBlock, Topology,
};
pub use routing::Path;
pub use spectrum::{Modulation, ModulationTable};
pub use strategy::{Strategy, StrategyConfig, StrategyRegistry, Trace};
pub use config::{ExperimentConfig, TopologyFile};
pub use metrics::CostModel;
pub use sim::{CapacityProfile, RunRecord, SweepPoint, SweepSpec, TrafficModel};
