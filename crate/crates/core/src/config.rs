//! TOML schemas for topology files and experiment configs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::metrics::CostModel;
use crate::model::{partition_problems, CoreGroups, Graph, NodeId};
use crate::sim::{CapacityProfile, TrafficModel};
use crate::spectrum::{ModulationEntry, ModulationTable};
use crate::strategy::{StrategyConfig, StrategyRegistry};

/// The bundled 14-node NSFNET description.
pub const NSFNET14: &str = include_str!("../topologies/nsfnet14.toml");

/// Name that selects the bundled topology in experiment configs.
pub const BUILTIN_NSFNET14: &str = "builtin:nsfnet14";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub distance_km: f64,
    /// Must match the file-level value when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSpec {
    pub node: String,
    pub capacity: u32,
}

/// Topology file. Core numbers in `core_groups` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub name: String,
    pub cores_per_link: usize,
    pub slots_per_core: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_groups: Option<Vec<Vec<usize>>>,
    pub nodes: Vec<String>,
    pub links: Vec<LinkSpec>,
    /// Fixed compute-capable nodes. When empty, nodes are drawn per seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compute: Vec<ComputeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Vec<ModulationEntry>>,
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub problems: Vec<String>,
}

impl Check {
    fn new(name: &'static str, problems: Vec<String>) -> Self {
        Check { name, problems }
    }

    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            if c.passed() {
                writeln!(f, "PASS {}", c.name)?;
            } else {
                writeln!(f, "FAIL {}: {}", c.name, c.problems.join("; "))?;
            }
        }
        Ok(())
    }
}

impl TopologyFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn nsfnet14() -> Self {
        Self::parse(NSFNET14, BUILTIN_NSFNET14).expect("bundled topology parses")
    }

    fn groups_zero_based(&self) -> Vec<Vec<usize>> {
        match &self.core_groups {
            Some(g) => g.iter().map(|grp| grp.iter().map(|&c| c.wrapping_sub(1)).collect()).collect(),
            None => CoreGroups::default_for(self.cores_per_link).groups().to_vec(),
        }
    }

    /// Every structural check, without building anything.
    pub fn check(&self) -> CheckReport {
        let mut checks = Vec::new();
        let index: BTreeMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        let mut names = Vec::new();
        if self.nodes.len() < 2 {
            names.push("at least two nodes are required".to_string());
        }
        if index.len() != self.nodes.len() {
            names.push("node names are not unique".to_string());
        }
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if !index.contains_key(end.as_str()) {
                    names.push(format!("link endpoint `{end}` is not a node"));
                }
            }
        }
        for c in &self.compute {
            if !index.contains_key(c.node.as_str()) {
                names.push(format!("compute node `{}` is not a node", c.node));
            }
        }
        checks.push(Check::new("node names", names));

        let mut lengths = Vec::new();
        for l in &self.links {
            if !(l.distance_km > 0.0 && l.distance_km.is_finite()) {
                lengths.push(format!("link {}-{} has distance {} km", l.a, l.b, l.distance_km));
            }
            if l.a == l.b {
                lengths.push(format!("link {}-{} is a self-loop", l.a, l.b));
            }
        }
        checks.push(Check::new("link distances", lengths));

        let mut seen = BTreeSet::new();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut dupes = Vec::new();
        for l in &self.links {
            if let (Some(&a), Some(&b)) = (index.get(l.a.as_str()), index.get(l.b.as_str())) {
                if !seen.insert((a.min(b), a.max(b))) {
                    dupes.push(format!("link {}-{} is listed twice", l.a, l.b));
                }
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let components: BTreeSet<usize> = (0..self.nodes.len()).map(|i| root(&mut parent, i)).collect();
        let mut connected = dupes;
        if components.len() > 1 {
            connected.push(format!("graph has {} disconnected components", components.len()));
        }
        checks.push(Check::new("connectivity", connected));

        let mut uniform = Vec::new();
        if self.cores_per_link == 0 || self.slots_per_core == 0 {
            uniform.push("cores_per_link and slots_per_core must be positive".to_string());
        }
        for l in &self.links {
            if l.cores.is_some_and(|c| c != self.cores_per_link) {
                uniform.push(format!("link {}-{} has {} cores, expected {}", l.a, l.b, l.cores.unwrap(), self.cores_per_link));
            }
            if l.slots.is_some_and(|s| s != self.slots_per_core) {
                uniform.push(format!("link {}-{} has {} slots, expected {}", l.a, l.b, l.slots.unwrap(), self.slots_per_core));
            }
        }
        checks.push(Check::new("core/slot uniformity", uniform));

        let groups = self.groups_zero_based();
        let mut partition = partition_problems(&groups, self.cores_per_link);
        if self.core_groups.as_ref().is_some_and(|g| g.iter().flatten().any(|&c| c == 0)) {
            partition.insert(0, "core numbers are 1-based".to_string());
        }
        checks.push(Check::new("core group partition", partition));

        let mut compute = Vec::new();
        let mut listed = BTreeSet::new();
        for c in &self.compute {
            if !listed.insert(&c.node) {
                compute.push(format!("compute node `{}` listed twice", c.node));
            }
        }
        checks.push(Check::new("compute nodes", compute));

        if let Some(m) = &self.modulation {
            let problems = ModulationTable::new(m.clone()).err().into_iter().collect();
            checks.push(Check::new("modulation table", problems));
        }
        CheckReport { checks }
    }

    pub fn build(&self) -> Result<Arc<Graph>, ConfigError> {
        let report = self.check();
        if !report.passed() {
            let msg: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| format!("{}: {}", c.name, c.problems.join("; ")))
                .collect();
            return Err(ConfigError::Invalid(format!("topology `{}`: {}", self.name, msg.join(" | "))));
        }
        let index: BTreeMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let edges = self
            .links
            .iter()
            .map(|l| (NodeId(index[l.a.as_str()]), NodeId(index[l.b.as_str()]), l.distance_km))
            .collect();
        let groups = CoreGroups::new(self.groups_zero_based(), self.cores_per_link).map_err(ConfigError::Invalid)?;
        let modulation = match &self.modulation {
            Some(m) => ModulationTable::new(m.clone()).map_err(ConfigError::Invalid)?,
            None => ModulationTable::standard(),
        };
        let graph = Graph::new(self.nodes.clone(), edges, self.cores_per_link, self.slots_per_core, groups, modulation)?;
        Ok(Arc::new(graph))
    }

    /// Fixed compute assignment, if the file lists one.
    pub fn fixed_compute(&self, graph: &Graph) -> Option<BTreeMap<NodeId, u32>> {
        if self.compute.is_empty() {
            return None;
        }
        Some(self.compute.iter().filter_map(|c| graph.node_by_name(&c.node).map(|n| (n, c.capacity))).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub mean_holding_hours: f64,
    pub bandwidth_min: u32,
    pub bandwidth_max: u32,
    pub compute_min: u32,
    pub compute_max: u32,
    /// Arrivals within this many minutes form one batch; 0 batches only
    /// simultaneous arrivals.
    pub batch_window_minutes: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            mean_holding_hours: 0.5,
            bandwidth_min: 1,
            bandwidth_max: 20,
            compute_min: 5,
            compute_max: 10,
            batch_window_minutes: 0.0,
        }
    }
}

/// Experiment config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Topology file path, relative to the config file, or `builtin:nsfnet14`.
    pub topology: String,
    pub strategies: Vec<String>,
    /// Requests per minute.
    pub arrival_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_requests: usize,
    pub compute_profile: CapacityProfile,
    /// Number of compute-capable nodes drawn per seed.
    pub compute_nodes: usize,
    pub traffic: TrafficSection,
    pub cost: CostModel,
    pub strategy: StrategyConfig,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: BUILTIN_NSFNET14.to_string(),
            strategies: ["dpsm", "dpsm-b", "wmsm", "wmsm-b", "sorted", "greedy"].map(String::from).to_vec(),
            arrival_rates: vec![5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            seeds: vec![1, 2, 3, 4, 5],
            n_requests: 5000,
            compute_profile: CapacityProfile::High,
            compute_nodes: 11,
            traffic: TrafficSection::default(),
            cost: CostModel::default(),
            strategy: StrategyConfig::default(),
            base_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(FsPath::to_path_buf);
        Ok(cfg)
    }

    pub fn topology_path(&self) -> Option<PathBuf> {
        if self.topology == BUILTIN_NSFNET14 {
            return None;
        }
        let p = PathBuf::from(&self.topology);
        Some(match (&self.base_dir, p.is_absolute()) {
            (Some(dir), false) => dir.join(p),
            _ => p,
        })
    }

    pub fn load_topology(&self) -> Result<TopologyFile, ConfigError> {
        match self.topology_path() {
            None => Ok(TopologyFile::nsfnet14()),
            Some(path) => TopologyFile::load(&path),
        }
    }

    pub fn traffic(&self, arrival_rate_per_min: f64) -> TrafficModel {
        TrafficModel {
            arrival_rate_per_min,
            mean_holding_hours: self.traffic.mean_holding_hours,
            n_requests: self.n_requests,
            bandwidth_range: (self.traffic.bandwidth_min, self.traffic.bandwidth_max),
            compute_range: (self.traffic.compute_min, self.traffic.compute_max),
            batch_window_minutes: self.traffic.batch_window_minutes,
        }
    }

    /// Checks everything except the topology file itself.
    pub fn check(&self) -> CheckReport {
        let mut checks = Vec::new();
        let registry = StrategyRegistry::builtin();
        let mut strategies: Vec<String> = Vec::new();
        if self.strategies.is_empty() {
            strategies.push("no strategies listed".into());
        }
        for s in &self.strategies {
            if let Err(e) = registry.create(s, &self.strategy) {
                strategies.push(e.to_string());
            }
        }
        checks.push(Check::new("strategies", strategies));

        let mut sweep = Vec::new();
        if self.arrival_rates.is_empty() || self.arrival_rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            sweep.push("arrival rates must be a non-empty list of positive numbers".into());
        }
        if self.seeds.is_empty() {
            sweep.push("at least one seed is required".into());
        }
        if self.n_requests == 0 {
            sweep.push("n_requests must be positive".into());
        }
        if self.compute_nodes == 0 {
            sweep.push("compute_nodes must be positive".into());
        }
        checks.push(Check::new("sweep", sweep));

        let t = &self.traffic;
        let mut traffic = Vec::new();
        if !(t.mean_holding_hours > 0.0 && t.mean_holding_hours.is_finite()) {
            traffic.push("mean_holding_hours must be positive".into());
        }
        if t.bandwidth_min == 0 || t.bandwidth_min > t.bandwidth_max {
            traffic.push(format!("bandwidth range [{}, {}] is empty or starts at 0", t.bandwidth_min, t.bandwidth_max));
        }
        if t.compute_min == 0 || t.compute_min > t.compute_max {
            traffic.push(format!("compute range [{}, {}] is empty or starts at 0", t.compute_min, t.compute_max));
        }
        if !(t.batch_window_minutes >= 0.0 && t.batch_window_minutes.is_finite()) {
            traffic.push("batch_window_minutes must be non-negative".into());
        }
        checks.push(Check::new("traffic", traffic));

        let cost = if self.cost.is_valid() { vec![] } else { vec!["unit costs must be positive".to_string()] };
        checks.push(Check::new("cost positivity", cost));
        CheckReport { checks }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let report = self.check();
        if report.passed() {
            return Ok(());
        }
        let msg: Vec<String> =
            report.checks.iter().filter(|c| !c.passed()).map(|c| format!("{}: {}", c.name, c.problems.join("; "))).collect();
        Err(ConfigError::Invalid(msg.join(" | ")))
    }
}
