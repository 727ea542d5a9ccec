//! Provisioning strategies behind one trait, looked up by name at runtime.
//!
//! A strategy is a pure decision function over a topology snapshot: it never
//! mutates state. The simulator reserves accepted mappings and releases them
//! on departure.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{BlockReason, ComputePlacement, MappingResult, NodeId, SliceRequest, Topology};
use crate::routing::Path;
use crate::spectrum::SearchPolicy;

mod baselines;
mod dpsm;
mod wmsm;

pub use baselines::{greedy_baseline, sorted_baseline, Greedy, Sorted};
pub use dpsm::{dpsm, dpsm_b, Dpsm, DpsmBalanced};
pub use wmsm::{enumerate_waypoint_configs, wmsm, wmsm_b, WaypointConfig, Wmsm, WmsmBalanced};

/// How WMSM ranks candidate routes before trying to allocate them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    /// Sum of per-segment slot counts.
    Slots,
    /// Sum of per-segment slot counts times segment hop counts.
    #[default]
    SlotLinks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub k_paths_dpsm: usize,
    pub k_paths_per_segment_wmsm: usize,
    pub max_waypoints: usize,
    pub lambda: f64,
    /// Allow one request's compute to be split over several nodes.
    pub allow_colocation: bool,
    /// Balanced variants rerun their standard variant when they fail.
    pub fallback_enabled: bool,
    pub rank_metric: RankMetric,
    /// Try other core groups when the best-ratio group has no fit.
    pub group_fallback: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            k_paths_dpsm: 3,
            k_paths_per_segment_wmsm: 2,
            max_waypoints: 2,
            lambda: 1.0,
            allow_colocation: true,
            fallback_enabled: true,
            rank_metric: RankMetric::SlotLinks,
            group_fallback: true,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_paths_dpsm == 0 || self.k_paths_per_segment_wmsm == 0 {
            return Err(ConfigError::Invalid("k path counts must be at least 1".into()));
        }
        if !(1..=2).contains(&self.max_waypoints) {
            return Err(ConfigError::Invalid("max_waypoints must be 1 or 2".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ConfigError::Invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub(crate) fn search_policy(&self) -> SearchPolicy {
        SearchPolicy { group_fallback: self.group_fallback }
    }
}

/// Optional decision log used by `slicemap trace`.
#[derive(Debug, Default)]
pub struct Trace {
    lines: Option<Vec<String>>,
}

impl Trace {
    pub fn off() -> Self {
        Trace { lines: None }
    }

    pub fn on() -> Self {
        Trace { lines: Some(Vec::new()) }
    }

    pub fn is_on(&self) -> bool {
        self.lines.is_some()
    }

    pub fn note(&mut self, line: impl FnOnce() -> String) {
        if let Some(lines) = self.lines.as_mut() {
            lines.push(line());
        }
    }

    pub fn lines(&self) -> &[String] {
        self.lines.as_deref().unwrap_or(&[])
    }
}

pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Decides one request against the current state.
    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult;

    /// Reorders requests that arrive in the same batch. Default keeps arrival order.
    fn prioritize(&self, _batch: &mut [SliceRequest]) {}
}

pub type StrategyCtor = fn(&StrategyConfig) -> Box<dyn Strategy>;

/// Name-to-constructor table.
pub struct StrategyRegistry {
    entries: Vec<(&'static str, StrategyCtor)>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("dpsm", |c| Box::new(Dpsm::new(c.clone())));
        reg.register("dpsm-b", |c| Box::new(DpsmBalanced::new(c.clone())));
        reg.register("wmsm", |c| Box::new(Wmsm::new(c.clone())));
        reg.register("wmsm-b", |c| Box::new(WmsmBalanced::new(c.clone())));
        reg.register("sorted", |c| Box::new(Sorted::new(c.clone())));
        reg.register("greedy", |c| Box::new(Greedy::new(c.clone())));
        reg
    }

    /// Adds or replaces a strategy.
    pub fn register(&mut self, name: &'static str, ctor: StrategyCtor) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(entry) => entry.1 = ctor,
            None => self.entries.push((name, ctor)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn create(&self, name: &str, config: &StrategyConfig) -> Result<Box<dyn Strategy>, ConfigError> {
        config.validate()?;
        let key = name.trim().to_ascii_lowercase().replace('_', "-");
        self.entries
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, ctor)| ctor(config))
            .ok_or_else(|| ConfigError::UnknownStrategy(name.to_string()))
    }
}

/// Of two failures on different candidates, the one that got further:
/// spectrum beats reach, reach beats compute, compute beats no path.
pub(crate) fn furthest(a: BlockReason, b: BlockReason) -> BlockReason {
    let stage = |r: BlockReason| match r {
        BlockReason::NoPath => 0,
        BlockReason::NoCompute => 1,
        BlockReason::ReachExceeded => 2,
        BlockReason::NoSpectrum => 3,
    };
    if stage(b) > stage(a) {
        b
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CapableNode {
    pub pos: usize,
    pub node: NodeId,
    pub residual: u32,
}

/// Compute-capable nodes of `path` in path order.
pub(crate) fn capable_on_path(topology: &Topology, path: &Path) -> Vec<CapableNode> {
    path.nodes
        .iter()
        .enumerate()
        .filter_map(|(pos, &node)| topology.compute_node(node).map(|c| CapableNode { pos, node, residual: c.residual() }))
        .collect()
}

/// Greedy fill over `nodes` in order: each takes `min(residual, remaining)`.
/// Zero-unit placements are omitted.
pub(crate) fn fill_in_order(topology: &Topology, nodes: &[NodeId], demand: u32) -> Vec<ComputePlacement> {
    let mut remaining = demand;
    let mut out = Vec::new();
    for &node in nodes {
        if remaining == 0 {
            break;
        }
        let take = topology.residual_or_zero(node).min(remaining);
        if take > 0 {
            out.push(ComputePlacement { node, units: take });
            remaining -= take;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_all_builtins() {
        let reg = StrategyRegistry::builtin();
        let cfg = StrategyConfig::default();
        for name in ["dpsm", "dpsm-b", "wmsm", "wmsm-b", "sorted", "greedy"] {
            assert_eq!(reg.create(name, &cfg).unwrap().name(), name);
        }
        assert_eq!(reg.create("WMSM_B", &cfg).unwrap().name(), "wmsm-b");
        assert!(matches!(reg.create("ilp", &cfg), Err(ConfigError::UnknownStrategy(_))));
    }

    #[test]
    fn config_bounds() {
        let bad = StrategyConfig { lambda: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = StrategyConfig { max_waypoints: 3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = StrategyConfig { k_paths_dpsm: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_is_lazy_when_off() {
        let mut t = Trace::off();
        t.note(|| unreachable!());
        assert!(t.lines().is_empty());
        let mut t = Trace::on();
        t.note(|| "x".into());
        assert_eq!(t.lines(), ["x"]);
    }
}
