use std::cmp::Ordering;
use std::collections::HashMap;

use crate::model::{BlockReason, ComputePlacement, LinkId, Mapping, MappingResult, NodeId, SegmentAllocation, SliceRequest, Topology};
use crate::routing::Path;
use crate::spectrum::{allocate_segment, SpectrumView};

use super::dpsm::describe_placements;
use super::{fill_in_order, furthest, RankMetric, Strategy, StrategyConfig, Trace};

/// Compute-capable waypoints in visit order: the route runs
/// source -> visits[0] -> ... -> destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WaypointConfig {
    pub visits: Vec<NodeId>,
}

/// Waypoint sets of size 1..=max_waypoints whose residual compute covers the
/// demand. Two-node sets appear once per visit order. Without colocation a
/// set qualifies only if one member covers the demand alone.
pub fn enumerate_waypoint_configs(
    request: &SliceRequest,
    topology: &Topology,
    config: &StrategyConfig,
) -> Vec<WaypointConfig> {
    let demand = request.compute_units as u64;
    let nodes: Vec<(NodeId, u64)> =
        topology.compute_nodes().map(|n| (n, topology.residual_or_zero(n) as u64)).collect();
    let mut out: Vec<WaypointConfig> =
        nodes.iter().filter(|(_, r)| *r >= demand).map(|&(n, _)| WaypointConfig { visits: vec![n] }).collect();
    if config.max_waypoints >= 2 {
        for &(a, ra) in &nodes {
            for &(b, rb) in &nodes {
                if a == b {
                    continue;
                }
                let ok = if config.allow_colocation { ra + rb >= demand } else { ra >= demand || rb >= demand };
                if ok {
                    out.push(WaypointConfig { visits: vec![a, b] });
                }
            }
        }
    }
    out
}

/// Waypoint-segmented mapping ranked by spectrum demand.
#[derive(Debug, Clone)]
pub struct Wmsm {
    config: StrategyConfig,
}

impl Wmsm {
    pub fn new(config: StrategyConfig) -> Self {
        Wmsm { config }
    }
}

impl Strategy for Wmsm {
    fn name(&self) -> &'static str {
        "wmsm"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run(request, topology, &self.config, Ranking::Spectrum, trace)
    }
}

/// Waypoint-segmented mapping ranked by total length plus lambda times the
/// spread between the longest and shortest segment; falls back to [`Wmsm`].
#[derive(Debug, Clone)]
pub struct WmsmBalanced {
    config: StrategyConfig,
}

impl WmsmBalanced {
    pub fn new(config: StrategyConfig) -> Self {
        WmsmBalanced { config }
    }
}

impl Strategy for WmsmBalanced {
    fn name(&self) -> &'static str {
        "wmsm-b"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run_balanced(request, topology, &self.config, trace)
    }
}

pub fn wmsm(request: &SliceRequest, topology: &Topology, config: &StrategyConfig) -> MappingResult {
    run(request, topology, config, Ranking::Spectrum, &mut Trace::off())
}

pub fn wmsm_b(request: &SliceRequest, topology: &Topology, config: &StrategyConfig) -> MappingResult {
    run_balanced(request, topology, config, &mut Trace::off())
}

fn run_balanced(request: &SliceRequest, topology: &Topology, config: &StrategyConfig, trace: &mut Trace) -> MappingResult {
    match run(request, topology, config, Ranking::Balanced(config.lambda), trace) {
        MappingResult::Blocked(reason) if config.fallback_enabled && reason != BlockReason::NoCompute => {
            trace.note(|| "wmsm-b: every balanced candidate failed, falling back to wmsm".into());
            run(request, topology, config, Ranking::Spectrum, trace)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy)]
enum Ranking {
    Spectrum,
    Balanced(f64),
}

/// One leg between consecutive stops. `path` is `None` when a waypoint
/// coincides with the leg's start (zero-length leg).
#[derive(Debug, Clone)]
struct Leg<'p> {
    path: Option<&'p Path>,
    slots: usize,
}

impl Leg<'_> {
    fn distance(&self) -> f64 {
        self.path.map_or(0.0, |p| p.distance_km)
    }

    fn hops(&self) -> usize {
        self.path.map_or(0, |p| p.hops())
    }
}

#[derive(Debug, Clone)]
struct Route<'p> {
    visits: Vec<NodeId>,
    legs: Vec<Leg<'p>>,
    /// Configuration objective for balanced ranking; 0 otherwise.
    balance: f64,
    spectrum: usize,
    distance: f64,
    hops: usize,
}

impl Route<'_> {
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.balance
            .total_cmp(&other.balance)
            .then(self.spectrum.cmp(&other.spectrum))
            .then(self.distance.total_cmp(&other.distance))
            .then(self.hops.cmp(&other.hops))
            .then_with(|| self.visits.cmp(&other.visits))
            .then_with(|| {
                let a = self.legs.iter().map(|l| l.path.map(|p| &p.nodes));
                let b = other.legs.iter().map(|l| l.path.map(|p| &p.nodes));
                a.cmp(b)
            })
    }

    fn describe(&self, topology: &Topology) -> String {
        let g = topology.graph();
        let legs: Vec<String> = self
            .legs
            .iter()
            .filter_map(|l| l.path.map(|p| format!("{} [{} slots]", p.describe(g), l.slots)))
            .collect();
        let visits: Vec<&str> = self.visits.iter().map(|&n| g.name(n)).collect();
        if self.balance > 0.0 {
            format!("W={{{}}} objective {:.1}, spectrum {}: {}", visits.join(","), self.balance, self.spectrum, legs.join(" | "))
        } else {
            format!("W={{{}}} spectrum {}: {}", visits.join(","), self.spectrum, legs.join(" | "))
        }
    }
}

fn spectrum_metric(legs: &[Leg<'_>], metric: RankMetric) -> usize {
    legs.iter()
        .map(|l| match metric {
            RankMetric::Slots => l.slots,
            RankMetric::SlotLinks => l.slots * l.hops(),
        })
        .sum()
}

/// Total length plus `lambda` times the spread between the longest and
/// shortest leg. Only real segments count: a waypoint at an endpoint leaves a
/// single segment with no spread.
fn balance_objective(distances: &[f64], lambda: f64) -> f64 {
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    distances.iter().sum::<f64>() + lambda * (max - min)
}

/// All reach-feasible routes of every waypoint configuration, ranked.
fn candidate_routes<'p>(
    request: &SliceRequest,
    topology: &Topology,
    config: &StrategyConfig,
    configs: &[WaypointConfig],
    ranking: Ranking,
    store: &'p HashMap<(NodeId, NodeId), Vec<Path>>,
    worst: &mut BlockReason,
) -> Vec<Route<'p>> {
    let table = topology.graph().modulation();
    let mut routes = Vec::new();
    'configs: for wc in configs {
        let mut stops = vec![request.source];
        stops.extend(&wc.visits);
        stops.push(request.destination);
        let mut options: Vec<Vec<Leg<'p>>> = Vec::with_capacity(stops.len() - 1);
        let mut leg_km: Vec<f64> = Vec::with_capacity(stops.len() - 1);
        for pair in stops.windows(2) {
            if pair[0] == pair[1] {
                options.push(vec![Leg { path: None, slots: 0 }]);
                continue;
            }
            let Some(paths) = store.get(&(pair[0], pair[1])) else {
                *worst = (*worst).max(BlockReason::NoPath).min(BlockReason::ReachExceeded);
                continue 'configs;
            };
            leg_km.push(paths[0].distance_km);
            let legs: Vec<Leg<'p>> = paths
                .iter()
                .filter_map(|p| {
                    let m = table.modulation_for(p.distance_km)?;
                    Some(Leg { path: Some(p), slots: table.slots_required(request.bandwidth_gbps, m) })
                })
                .collect();
            if legs.is_empty() {
                *worst = BlockReason::ReachExceeded;
                continue 'configs;
            }
            options.push(legs);
        }
        let balance = match ranking {
            Ranking::Spectrum => 0.0,
            Ranking::Balanced(lambda) => balance_objective(&leg_km, lambda),
        };

        let mut choice = vec![0usize; options.len()];
        loop {
            let legs: Vec<Leg<'p>> = choice.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect();
            if !reuses_link(&legs) {
                routes.push(Route {
                    visits: wc.visits.clone(),
                    balance,
                    spectrum: spectrum_metric(&legs, config.rank_metric),
                    distance: legs.iter().map(Leg::distance).sum(),
                    hops: legs.iter().map(Leg::hops).sum(),
                    legs,
                });
            }
            // Odometer over per-leg path choices.
            let mut i = 0;
            while i < choice.len() {
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                break;
            }
        }
    }
    routes.sort_by(Route::cmp_rank);
    routes
}

/// Segments of one request must not share a fiber.
fn reuses_link(legs: &[Leg<'_>]) -> bool {
    let mut seen: Vec<LinkId> = Vec::new();
    for l in legs.iter().filter_map(|l| l.path) {
        for link in &l.links {
            if seen.contains(link) {
                return true;
            }
            seen.push(*link);
        }
    }
    false
}

fn run(request: &SliceRequest, topology: &Topology, config: &StrategyConfig, ranking: Ranking, trace: &mut Trace) -> MappingResult {
    let label = match ranking {
        Ranking::Spectrum => "wmsm",
        Ranking::Balanced(_) => "wmsm-b",
    };
    let configs = enumerate_waypoint_configs(request, topology, config);
    trace.note(|| format!("{label}: {} waypoint configurations", configs.len()));
    select(request, topology, config, ranking, &configs, label, trace)
}

/// Ranks every route built from `configs` and commits to the first one whose
/// legs all find spectrum.
fn select(
    request: &SliceRequest,
    topology: &Topology,
    config: &StrategyConfig,
    ranking: Ranking,
    configs: &[WaypointConfig],
    label: &str,
    trace: &mut Trace,
) -> MappingResult {
    if configs.is_empty() {
        return MappingResult::Blocked(BlockReason::NoCompute);
    }

    let graph = topology.graph();
    let mut store: HashMap<(NodeId, NodeId), Vec<Path>> = HashMap::new();
    for wc in configs {
        let mut stops = vec![request.source];
        stops.extend(&wc.visits);
        stops.push(request.destination);
        for pair in stops.windows(2) {
            if pair[0] != pair[1] && !store.contains_key(&(pair[0], pair[1])) {
                if let Ok(paths) = graph.k_shortest_paths(pair[0], pair[1], config.k_paths_per_segment_wmsm) {
                    store.insert((pair[0], pair[1]), paths.to_vec());
                }
            }
        }
    }

    let mut reason = BlockReason::NoPath;
    let routes = candidate_routes(request, topology, config, configs, ranking, &store, &mut reason);
    trace.note(|| format!("{label}: {} candidate routes", routes.len()));
    if routes.is_empty() {
        return MappingResult::Blocked(reason);
    }

    let mut memo: HashMap<&[NodeId], Result<SegmentAllocation, BlockReason>> = HashMap::new();
    let view = SpectrumView::new(topology);
    for (rank, route) in routes.iter().enumerate() {
        let mut segments = Vec::with_capacity(route.legs.len());
        let mut failed = None;
        for path in route.legs.iter().filter_map(|l| l.path) {
            // Legs never share links, so earlier legs cannot affect this search.
            let result = memo
                .entry(path.nodes.as_slice())
                .or_insert_with(|| {
                    allocate_segment(&view, (path.source(), path.target()), path, request.bandwidth_gbps, config.search_policy())
                })
                .clone();
            match result {
                Ok(seg) => segments.push(seg),
                Err(r) => {
                    failed = Some((path, r));
                    break;
                }
            }
        }
        match failed {
            Some((path, r)) => {
                trace.note(|| format!("  #{} {} -> {} on {}", rank + 1, route.describe(topology), r, path.describe(graph)));
                reason = furthest(reason, r);
            }
            None => {
                let placements = place_compute(topology, &route.visits, request.compute_units, config.allow_colocation);
                trace.note(|| format!("  #{} {} -> accepted", rank + 1, route.describe(topology)));
                for seg in &segments {
                    trace.note(|| {
                        format!(
                            "    segment {}: {} core {} slots {}..{}",
                            seg.path.describe(graph),
                            seg.modulation,
                            seg.core + 1,
                            seg.slots.start,
                            seg.slots.end()
                        )
                    });
                }
                trace.note(|| format!("    compute: {}", describe_placements(topology, &placements)));
                return MappingResult::Accepted(Mapping { segments, placements });
            }
        }
    }
    MappingResult::Blocked(reason)
}

fn place_compute(topology: &Topology, visits: &[NodeId], demand: u32, allow_split: bool) -> Vec<ComputePlacement> {
    if allow_split {
        return fill_in_order(topology, visits, demand);
    }
    let node = visits
        .iter()
        .copied()
        .find(|&n| topology.residual_or_zero(n) >= demand)
        .expect("enumeration admits only sets with a covering node");
    vec![ComputePlacement { node, units: demand }]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{graph_from_edges, line_topology};
    use crate::spectrum::Modulation;
    use std::collections::BTreeMap;

    fn req(s: usize, d: usize, bw: u32, c: u32) -> SliceRequest {
        SliceRequest::new(1, NodeId(s), NodeId(d), bw, c)
    }

    fn visits(configs: &[WaypointConfig]) -> Vec<Vec<usize>> {
        configs.iter().map(|c| c.visits.iter().map(|n| n.0).collect()).collect()
    }

    #[test]
    fn enumerate_single_capable_node() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 100)]);
        let cfg = StrategyConfig::default();
        assert_eq!(visits(&enumerate_waypoint_configs(&req(0, 2, 1, 5), &topo, &cfg)), vec![vec![1]]);
    }

    #[test]
    fn enumerate_pairs_both_orders() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 3), (2, 3)]);
        let cfg = StrategyConfig::default();
        assert_eq!(visits(&enumerate_waypoint_configs(&req(0, 2, 1, 5), &topo, &cfg)), vec![vec![1, 2], vec![2, 1]]);
        let strict = StrategyConfig { allow_colocation: false, ..Default::default() };
        assert!(enumerate_waypoint_configs(&req(0, 2, 1, 5), &topo, &strict).is_empty());
        let single = StrategyConfig { max_waypoints: 1, ..Default::default() };
        assert!(enumerate_waypoint_configs(&req(0, 2, 1, 5), &topo, &single).is_empty());
        assert!(enumerate_waypoint_configs(&req(0, 2, 1, 7), &topo, &cfg).is_empty());
    }

    #[test]
    fn split_halves_slots() {
        let topo = line_topology(&[700.0, 800.0], 7, 120, &[(1, 4000)]);
        let MappingResult::Accepted(m) = wmsm(&req(0, 2, 10, 5), &topo, &StrategyConfig::default()) else { panic!() };
        assert_eq!(m.segments.len(), 2);
        assert!(m.segments.iter().all(|s| s.modulation == Modulation::Qpsk && s.slots.len == 20));
        assert_eq!(m.placements, vec![ComputePlacement { node: NodeId(1), units: 5 }]);
    }

    #[test]
    fn short_request_prefers_cheapest_config() {
        // A-B-C, 200 + 200 km; B and C compute-capable. Every configuration
        // costs 10 slots on each of two links, so the tie goes to the shorter
        // total, then to the lower waypoint id.
        let topo = line_topology(&[200.0, 200.0], 7, 120, &[(1, 4000), (2, 4000)]);
        let MappingResult::Accepted(m) = wmsm(&req(0, 2, 10, 5), &topo, &StrategyConfig::default()) else { panic!() };
        assert_eq!(m.slot_links(), 20);
        assert_eq!(m.placements[0].node, NodeId(1));
    }

    #[test]
    fn no_compute_blocks() {
        let graph = graph_from_edges(3, &[(0, 1, 100.0), (1, 2, 100.0)], 7, 120);
        let topo = Topology::new(graph, &BTreeMap::from([(NodeId(1), 0)])).unwrap();
        assert_eq!(wmsm(&req(0, 2, 1, 5), &topo, &StrategyConfig::default()), MappingResult::Blocked(BlockReason::NoCompute));
        assert_eq!(wmsm_b(&req(0, 2, 1, 5), &topo, &StrategyConfig::default()), MappingResult::Blocked(BlockReason::NoCompute));
    }

    #[test]
    fn balance_objective_values() {
        assert_eq!((balance_objective(&[700.0, 800.0], 1.0), balance_objective(&[300.0, 1200.0], 1.0)), (1600.0, 2400.0));
        assert_eq!(balance_objective(&[750.0, 750.0], 1.0), 1500.0);
        assert_eq!(balance_objective(&[900.0], 1.0), 900.0);
    }

    #[test]
    fn large_lambda_orders_by_imbalance() {
        let legs = [[600.0, 900.0], [100.0, 1300.0], [700.0, 750.0]];
        let order = |lambda: f64| {
            let mut idx: Vec<usize> = (0..legs.len()).collect();
            idx.sort_by(|&i, &j| balance_objective(&legs[i], lambda).total_cmp(&balance_objective(&legs[j], lambda)));
            idx
        };
        assert_eq!(order(1e6), vec![2, 0, 1]);
        assert_eq!(order(0.001), vec![1, 2, 0]);
    }

    #[test]
    fn balanced_endpoint_waypoint_is_one_segment() {
        // A-B-C-D with 300 km links and compute at A and C. The endpoint
        // configuration is one 900 km segment with no spread, which beats
        // 600 + 300 with a 300 km spread.
        let topo = line_topology(&[300.0, 300.0, 300.0], 7, 120, &[(0, 4000), (2, 4000)]);
        let cfg = StrategyConfig { max_waypoints: 1, ..Default::default() };
        let MappingResult::Accepted(b) = wmsm_b(&req(0, 3, 10, 5), &topo, &cfg) else { panic!() };
        assert_eq!(b.placements[0].node, NodeId(0));
        assert_eq!(b.segments.len(), 1);
    }

    #[test]
    fn balanced_prefers_even_split() {
        // A-B-C-D with 300, 300, 400 km and compute at B and C. Both
        // waypoints cost 50 slot-links, so wmsm falls to the node order and
        // takes B (300/700); wmsm-b takes C (600/400).
        let topo = line_topology(&[300.0, 300.0, 400.0], 7, 120, &[(1, 4000), (2, 4000)]);
        let cfg = StrategyConfig { max_waypoints: 1, ..Default::default() };
        let MappingResult::Accepted(a) = wmsm(&req(0, 3, 10, 5), &topo, &cfg) else { panic!() };
        let MappingResult::Accepted(b) = wmsm_b(&req(0, 3, 10, 5), &topo, &cfg) else { panic!() };
        assert_eq!((a.placements[0].node, b.placements[0].node), (NodeId(1), NodeId(2)));
        assert_eq!(a.slot_links(), b.slot_links());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn balanced_choice_ignores_configuration_order(
            seed in 0u64..10_000,
            s in 0usize..14,
            d in 0usize..13,
            c in 1u32..=10,
            bw in 1u32..=20,
        ) {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let graph = crate::config::TopologyFile::nsfnet14().build().unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut compute = BTreeMap::new();
            for n in 0..14 {
                if rng.random_bool(0.4) {
                    compute.insert(NodeId(n), rng.random_range(0..12u32));
                }
            }
            let mut topo = Topology::new(graph.clone(), &compute).unwrap();
            for link in 0..graph.links().len() {
                for core in 0..graph.cores_per_link() {
                    let start = rng.random_range(0..110);
                    crate::fixtures::fill(&mut topo, crate::model::LinkId(link), core, crate::model::SlotBlock::new(start, rng.random_range(1..=10)), 10_000 + (link * 7 + core) as u64);
                }
            }
            let d = if d >= s { d + 1 } else { d };
            let request = req(s, d, bw, c);
            let cfg = StrategyConfig::default();
            let mut configs = enumerate_waypoint_configs(&request, &topo, &cfg);
            let ranking = Ranking::Balanced(cfg.lambda);
            let expected = select(&request, &topo, &cfg, ranking, &configs, "wmsm-b", &mut Trace::off());
            configs.shuffle(&mut rng);
            let shuffled = select(&request, &topo, &cfg, ranking, &configs, "wmsm-b", &mut Trace::off());
            proptest::prop_assert_eq!(expected, shuffled);
        }
    }
}
