//! Dynamic-traffic simulation: Poisson arrivals, exponential holding times,
//! strategy decisions, commit and release, and multi-seed sweeps.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ConfigError, SimError};
use crate::metrics::{audit_committed, blocking_ratio, request_cost, spectrum_utilization, CostModel};
use crate::model::{BlockReason, Graph, MappingResult, NodeId, RequestId, SliceRequest, Topology};
use crate::strategy::{Strategy, StrategyConfig, StrategyRegistry, Trace};

const STREAM_ARRIVALS: u64 = 0;
const STREAM_HOLDING: u64 = 1;
const STREAM_ENDPOINTS: u64 = 2;
const STREAM_DEMANDS: u64 = 3;
const STREAM_SUBSTRATE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-node compute capacity presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CapacityProfile {
    #[default]
    High,
    Limited,
}

impl CapacityProfile {
    pub fn capacity(&self) -> u32 {
        match self {
            CapacityProfile::High => 4000,
            CapacityProfile::Limited => 400,
        }
    }
}

impl FromStr for CapacityProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(CapacityProfile::High),
            "limited" => Ok(CapacityProfile::Limited),
            other => Err(format!("unknown compute profile `{other}` (expected high or limited)")),
        }
    }
}

impl fmt::Display for CapacityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CapacityProfile::High => "high",
            CapacityProfile::Limited => "limited",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub arrival_rate_per_min: f64,
    pub mean_holding_hours: f64,
    pub n_requests: usize,
    /// Inclusive range in Gbps.
    pub bandwidth_range: (u32, u32),
    /// Inclusive range in compute units.
    pub compute_range: (u32, u32),
    pub batch_window_minutes: f64,
}

impl Default for TrafficModel {
    fn default() -> Self {
        TrafficModel {
            arrival_rate_per_min: 10.0,
            mean_holding_hours: 0.5,
            n_requests: 5000,
            bandwidth_range: (1, 20),
            compute_range: (5, 10),
            batch_window_minutes: 0.0,
        }
    }
}

impl TrafficModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.arrival_rate_per_min > 0.0 && self.arrival_rate_per_min.is_finite()) {
            return Err(ConfigError::Invalid(format!("arrival rate must be positive, got {}", self.arrival_rate_per_min)));
        }
        if !(self.mean_holding_hours > 0.0 && self.mean_holding_hours.is_finite()) {
            return Err(ConfigError::Invalid("mean holding time must be positive".into()));
        }
        let (b0, b1) = self.bandwidth_range;
        let (c0, c1) = self.compute_range;
        if b0 == 0 || b0 > b1 || c0 == 0 || c0 > c1 {
            return Err(ConfigError::Invalid("demand ranges must be non-empty and start at 1 or more".into()));
        }
        if self.batch_window_minutes.is_nan() || self.batch_window_minutes < 0.0 {
            return Err(ConfigError::Invalid("batch window must be non-negative".into()));
        }
        Ok(())
    }
}

/// Request stream for one run. Each quantity draws from its own sub-stream of
/// `seed`, so changing one distribution leaves the others unchanged.
pub fn generate_requests(traffic: &TrafficModel, node_count: usize, seed: u64) -> Vec<SliceRequest> {
    assert!(node_count >= 2, "at least two nodes are needed for distinct endpoints");
    let per_hour = traffic.arrival_rate_per_min * 60.0;
    let inter = Exp::new(per_hour).expect("positive rate");
    let hold = Exp::new(1.0 / traffic.mean_holding_hours).expect("positive mean");
    let (mut arr, mut hol, mut ends, mut dem) = (
        stream(seed, STREAM_ARRIVALS),
        stream(seed, STREAM_HOLDING),
        stream(seed, STREAM_ENDPOINTS),
        stream(seed, STREAM_DEMANDS),
    );
    let mut t = 0.0;
    (0..traffic.n_requests)
        .map(|i| {
            t += inter.sample(&mut arr);
            let mut holding = hold.sample(&mut hol);
            while holding <= 0.0 {
                holding = hold.sample(&mut hol);
            }
            let s = ends.random_range(0..node_count);
            let mut d = ends.random_range(0..node_count - 1);
            if d >= s {
                d += 1;
            }
            let bw = dem.random_range(traffic.bandwidth_range.0..=traffic.bandwidth_range.1);
            let c = dem.random_range(traffic.compute_range.0..=traffic.compute_range.1);
            SliceRequest {
                id: RequestId(i as u64 + 1),
                source: NodeId(s),
                destination: NodeId(d),
                bandwidth_gbps: bw,
                compute_units: c,
                arrival_time: t,
                holding_time: holding,
            }
        })
        .collect()
}

/// `count` compute-capable nodes drawn uniformly from `seed`, in ascending id order.
pub fn draw_compute_nodes(graph: &Graph, count: usize, capacity: u32, seed: u64) -> BTreeMap<NodeId, u32> {
    let n = graph.node_count();
    let mut rng = stream(seed, STREAM_SUBSTRATE);
    sample(&mut rng, n, count.min(n)).into_iter().map(|i| (NodeId(i), capacity)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub strategy: String,
    pub arrival_rate_per_min: f64,
    pub seed: u64,
    pub n_requests: usize,
    pub accepted: u64,
    pub blocked: u64,
    /// Indexed like [`BlockReason::ALL`].
    pub blocked_by: [u64; 4],
    pub blocking_ratio: f64,
    /// Time average from time zero to the last arrival.
    pub mean_utilization: f64,
    /// Utilization right after the last arrival, before draining.
    pub final_utilization: f64,
    /// Mean cost per accepted request; 0 when none was accepted.
    pub mean_cost: f64,
    pub audited: u64,
    pub restored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub cost: CostModel,
    /// Re-check every committed mapping with the independent validator.
    pub audit: bool,
    pub batch_window_minutes: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { cost: CostModel::default(), audit: true, batch_window_minutes: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Departure {
    time: f64,
    id: RequestId,
}

impl Eq for Departure {}

impl Ord for Departure {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Accumulates the utilization integral over event intervals.
#[derive(Debug, Default)]
struct UtilizationClock {
    last: f64,
    area: f64,
}

impl UtilizationClock {
    fn advance(&mut self, to: f64, utilization: f64) {
        self.area += utilization * (to - self.last);
        self.last = to;
    }
}

/// Runs one request stream against `initial`, which is left untouched.
///
/// Arrivals are decided in batches: a batch collects arrivals within the
/// window of its first arrival and is decided at its last arrival time, after
/// every departure due by then. Accepted requests depart `holding_time` after
/// that decision. After the last batch every remaining request is released and
/// the state must equal `initial`.
pub fn run(
    initial: &Topology,
    strategy: &dyn Strategy,
    requests: &[SliceRequest],
    arrival_rate_per_min: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord, SimError> {
    let mut topo = initial.clone();
    let mut departures: BinaryHeap<Reverse<Departure>> = BinaryHeap::new();
    let mut clock = UtilizationClock::default();
    let window = options.batch_window_minutes / 60.0;
    let (mut accepted, mut blocked, mut audited) = (0u64, 0u64, 0u64);
    let mut blocked_by = [0u64; 4];
    let mut cost_sum = 0.0;
    let mut trace = Trace::off();

    let mut i = 0;
    while i < requests.len() {
        let first = requests[i].arrival_time;
        let mut j = i + 1;
        while j < requests.len() && requests[j].arrival_time - first <= window {
            j += 1;
        }
        let now = requests[j - 1].arrival_time;
        while let Some(&Reverse(dep)) = departures.peek() {
            if dep.time > now {
                break;
            }
            departures.pop();
            clock.advance(dep.time, spectrum_utilization(&topo));
            topo.release(dep.id).map_err(|source| SimError::Reserve {
                strategy: strategy.name().into(),
                request: dep.id,
                source,
            })?;
        }
        clock.advance(now, spectrum_utilization(&topo));

        let mut batch = requests[i..j].to_vec();
        strategy.prioritize(&mut batch);
        for req in &batch {
            match strategy.map(req, &topo, &mut trace) {
                MappingResult::Accepted(mapping) => {
                    topo.reserve(req, &mapping).map_err(|source| SimError::Reserve {
                        strategy: strategy.name().into(),
                        request: req.id,
                        source,
                    })?;
                    if options.audit {
                        let report = audit_committed(&topo, req);
                        if !report.all_passed() {
                            return Err(SimError::ConstraintViolation {
                                strategy: strategy.name().into(),
                                request: req.id,
                                details: report.to_string(),
                            });
                        }
                        audited += 1;
                    }
                    cost_sum += request_cost(&mapping, &options.cost);
                    accepted += 1;
                    departures.push(Reverse(Departure { time: now + req.holding_time, id: req.id }));
                }
                MappingResult::Blocked(reason) => {
                    blocked += 1;
                    blocked_by[BlockReason::ALL.iter().position(|r| *r == reason).unwrap()] += 1;
                }
            }
        }
        i = j;
    }

    let horizon = clock.last;
    let final_utilization = spectrum_utilization(&topo);
    let mean_utilization = if horizon > 0.0 { clock.area / horizon } else { final_utilization };
    while let Some(Reverse(dep)) = departures.pop() {
        topo.release(dep.id).map_err(|source| SimError::Reserve { strategy: strategy.name().into(), request: dep.id, source })?;
    }
    let restored = topo == *initial;
    if !restored {
        return Err(SimError::NotRestored);
    }

    Ok(RunRecord {
        strategy: strategy.name().to_string(),
        arrival_rate_per_min,
        seed,
        n_requests: requests.len(),
        accepted,
        blocked,
        blocked_by,
        blocking_ratio: blocking_ratio(accepted, blocked).unwrap_or(0.0),
        mean_utilization,
        final_utilization,
        mean_cost: if accepted > 0 { cost_sum / accepted as f64 } else { 0.0 },
        audited,
        restored,
    })
}

/// A full strategy x rate x seed cross-product.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub graph: Arc<Graph>,
    /// Used for every seed when set; otherwise nodes are drawn per seed.
    pub fixed_compute: Option<BTreeMap<NodeId, u32>>,
    pub compute_nodes: usize,
    pub capacity: u32,
    pub strategies: Vec<String>,
    pub strategy_config: StrategyConfig,
    pub arrival_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Template; the arrival rate is replaced per point.
    pub traffic: TrafficModel,
    pub cost: CostModel,
    pub audit: bool,
}

impl SweepSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let file = cfg.load_topology()?;
        let graph = file.build()?;
        let fixed_compute = file.fixed_compute(&graph);
        Ok(SweepSpec {
            graph,
            fixed_compute,
            compute_nodes: cfg.compute_nodes,
            capacity: cfg.compute_profile.capacity(),
            strategies: cfg.strategies.clone(),
            strategy_config: cfg.strategy.clone(),
            arrival_rates: cfg.arrival_rates.clone(),
            seeds: cfg.seeds.clone(),
            traffic: cfg.traffic(cfg.arrival_rates.first().copied().unwrap_or(1.0)),
            cost: cfg.cost,
            audit: true,
        })
    }

    /// The substrate every strategy sees for `seed`.
    pub fn topology(&self, seed: u64) -> Result<Topology, ConfigError> {
        let compute = match &self.fixed_compute {
            Some(c) => c.clone(),
            None => draw_compute_nodes(&self.graph, self.compute_nodes, self.capacity, seed),
        };
        Ok(Topology::new(self.graph.clone(), &compute)?)
    }

    pub fn run_count(&self) -> usize {
        self.strategies.len() * self.arrival_rates.len() * self.seeds.len()
    }
}

/// Runs every point of `spec` in parallel. Records come back in
/// strategy-major, then rate, then seed order regardless of scheduling.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>, SimError> {
    let registry = StrategyRegistry::builtin();
    let strategies: Vec<Box<dyn Strategy>> =
        spec.strategies.iter().map(|s| registry.create(s, &spec.strategy_config)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::with_capacity(spec.run_count());
    for si in 0..strategies.len() {
        for &rate in &spec.arrival_rates {
            for &seed in &spec.seeds {
                jobs.push((si, rate, seed));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(si, rate, seed)| {
            let traffic = TrafficModel { arrival_rate_per_min: rate, ..spec.traffic.clone() };
            traffic.validate()?;
            let topo = spec.topology(seed)?;
            let requests = generate_requests(&traffic, spec.graph.node_count(), seed);
            let options = RunOptions { cost: spec.cost, audit: spec.audit, batch_window_minutes: traffic.batch_window_minutes };
            run(&topo, strategies[si].as_ref(), &requests, rate, seed, &options)
        })
        .collect()
}

/// Seed aggregate of one (strategy, rate) point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub strategy: String,
    pub arrival_rate_per_min: f64,
    pub seeds: usize,
    pub blocking_mean: f64,
    /// Sample standard deviation; 0 with a single seed.
    pub blocking_sd: f64,
    pub utilization_mean: f64,
    pub final_utilization_mean: f64,
    pub cost_mean: f64,
    /// Mean blocked count per run, indexed like [`BlockReason::ALL`].
    pub blocked_by_mean: [f64; 4],
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by (strategy, rate) in first-seen order.
pub fn summarize(records: &[RunRecord]) -> Vec<SweepPoint> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, a)| *s == r.strategy && *a == r.arrival_rate_per_min) {
            keys.push((r.strategy.clone(), r.arrival_rate_per_min));
        }
    }
    keys.into_iter()
        .map(|(strategy, rate)| {
            let group: Vec<&RunRecord> =
                records.iter().filter(|r| r.strategy == strategy && r.arrival_rate_per_min == rate).collect();
            let col = |f: &dyn Fn(&RunRecord) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (blocking_mean, blocking_sd) = mean_sd(&col(&|r| r.blocking_ratio));
            let mut blocked_by_mean = [0.0; 4];
            for (k, slot) in blocked_by_mean.iter_mut().enumerate() {
                *slot = mean_sd(&col(&|r| r.blocked_by[k] as f64)).0;
            }
            SweepPoint {
                strategy,
                arrival_rate_per_min: rate,
                seeds: group.len(),
                blocking_mean,
                blocking_sd,
                utilization_mean: mean_sd(&col(&|r| r.mean_utilization)).0,
                final_utilization_mean: mean_sd(&col(&|r| r.final_utilization)).0,
                cost_mean: mean_sd(&col(&|r| r.mean_cost)).0,
                blocked_by_mean,
            }
        })
        .collect()
}
