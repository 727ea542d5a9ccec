use crate::model::{BlockReason, ComputePlacement, Mapping, MappingResult, RequestId, SegmentAllocation, SliceRequest, SlotBlock, Topology};
use crate::routing::Path;
use crate::spectrum::{allocate_segment, first_core_fit, SpectrumView};

use super::dpsm::describe_placements;
use super::{capable_on_path, Strategy, StrategyConfig, Trace};

/// Demand-sorted baseline: larger compute (then bandwidth) demands go first
/// within a batch; compute lands on the path node with the most residual.
#[derive(Debug, Clone)]
pub struct Sorted {
    config: StrategyConfig,
}

impl Sorted {
    pub fn new(config: StrategyConfig) -> Self {
        Sorted { config }
    }
}

impl Strategy for Sorted {
    fn name(&self) -> &'static str {
        "sorted"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run_sorted(request, topology, &self.config, trace)
    }

    fn prioritize(&self, batch: &mut [SliceRequest]) {
        batch.sort_by(|a, b| {
            b.compute_units
                .cmp(&a.compute_units)
                .then(b.bandwidth_gbps.cmp(&a.bandwidth_gbps))
                .then(a.id.cmp(&b.id))
        });
    }
}

/// First-come first-served baseline: first path node that fits the compute,
/// lowest core with a continuous fit.
#[derive(Debug, Clone)]
pub struct Greedy {
    config: StrategyConfig,
}

impl Greedy {
    pub fn new(config: StrategyConfig) -> Self {
        Greedy { config }
    }
}

impl Strategy for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run_greedy(request, topology, &self.config, trace)
    }
}

/// Processes a batch in sorted order against a private copy of `topology`,
/// committing each accepted mapping before the next request. Results are in
/// processing order.
pub fn sorted_baseline(
    batch: &[SliceRequest],
    topology: &Topology,
    config: &StrategyConfig,
) -> Vec<(RequestId, MappingResult)> {
    let strategy = Sorted::new(config.clone());
    let mut order = batch.to_vec();
    strategy.prioritize(&mut order);
    let mut state = topology.clone();
    order
        .iter()
        .map(|req| {
            let result = run_sorted(req, &state, config, &mut Trace::off());
            if let MappingResult::Accepted(m) = &result {
                state.reserve(req, m).expect("baseline mapping fits the state it was computed on");
            }
            (req.id, result)
        })
        .collect()
}

pub fn greedy_baseline(request: &SliceRequest, topology: &Topology, config: &StrategyConfig) -> MappingResult {
    run_greedy(request, topology, config, &mut Trace::off())
}

fn shortest(request: &SliceRequest, topology: &Topology) -> Option<Path> {
    let paths = topology.graph().k_shortest_paths(request.source, request.destination, 1).ok()?;
    paths.first().cloned()
}

fn run_sorted(request: &SliceRequest, topology: &Topology, config: &StrategyConfig, trace: &mut Trace) -> MappingResult {
    let graph = topology.graph();
    let Some(path) = shortest(request, topology) else {
        return MappingResult::Blocked(BlockReason::NoPath);
    };
    trace.note(|| format!("sorted: shortest path {}", path.describe(graph)));
    let mut ranked = capable_on_path(topology, &path);
    ranked.sort_by(|a, b| b.residual.cmp(&a.residual).then(a.pos.cmp(&b.pos)));
    for c in &ranked {
        trace.note(|| format!("  node {} residual {}", graph.name(c.node), c.residual));
    }
    let Some(top) = ranked.first().filter(|c| c.residual >= request.compute_units) else {
        return MappingResult::Blocked(BlockReason::NoCompute);
    };
    let table = graph.modulation();
    let Some(modulation) = table.modulation_for(path.distance_km) else {
        return MappingResult::Blocked(BlockReason::ReachExceeded);
    };

    // Early exit: the scarcest link is checked first; no link can hold a
    // block larger than its free count on any core.
    let needed = table.slots_required(request.bandwidth_gbps, modulation);
    let view = SpectrumView::new(topology);
    let cores = graph.cores_per_link();
    let mut links = path.links.clone();
    links.sort_by_key(|&l| ((0..cores).map(|c| view.free_slots(l, c)).sum::<usize>(), l));
    for &link in &links {
        let best = (0..cores).map(|c| view.free_slots(link, c)).max().unwrap_or(0);
        if best < needed {
            trace.note(|| format!("  link {} has at most {best} free slots per core, needs {needed}", link));
            return MappingResult::Blocked(BlockReason::NoSpectrum);
        }
    }

    match allocate_segment(&view, (request.source, request.destination), &path, request.bandwidth_gbps, config.search_policy()) {
        Ok(segment) => {
            let placements = vec![ComputePlacement { node: top.node, units: request.compute_units }];
            trace.note(|| {
                format!(
                    "  accepted: {} core {} slots {}..{}; compute {}",
                    segment.modulation,
                    segment.core + 1,
                    segment.slots.start,
                    segment.slots.end(),
                    describe_placements(topology, &placements)
                )
            });
            MappingResult::Accepted(Mapping { segments: vec![segment], placements })
        }
        Err(reason) => MappingResult::Blocked(reason),
    }
}

fn run_greedy(request: &SliceRequest, topology: &Topology, _config: &StrategyConfig, trace: &mut Trace) -> MappingResult {
    let graph = topology.graph();
    let Some(path) = shortest(request, topology) else {
        return MappingResult::Blocked(BlockReason::NoPath);
    };
    trace.note(|| format!("greedy: shortest path {}", path.describe(graph)));
    let Some(site) = capable_on_path(topology, &path).into_iter().find(|c| c.residual >= request.compute_units) else {
        return MappingResult::Blocked(BlockReason::NoCompute);
    };
    let table = graph.modulation();
    let Some(modulation) = table.modulation_for(path.distance_km) else {
        return MappingResult::Blocked(BlockReason::ReachExceeded);
    };
    let needed = table.slots_required(request.bandwidth_gbps, modulation);
    let Some((core, start)) = first_core_fit(&SpectrumView::new(topology), &path, needed) else {
        return MappingResult::Blocked(BlockReason::NoSpectrum);
    };
    trace.note(|| {
        format!("  accepted: {modulation} core {} slots {start}..{}; compute at {}", core + 1, start + needed, graph.name(site.node))
    });
    let segment = SegmentAllocation {
        endpoints: (request.source, request.destination),
        path,
        modulation,
        core,
        slots: SlotBlock::new(start, needed),
    };
    MappingResult::Accepted(Mapping {
        segments: vec![segment],
        placements: vec![ComputePlacement { node: site.node, units: request.compute_units }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fill, line_topology, two_node};
    use crate::model::{LinkId, NodeId};

    fn req(id: u64, s: usize, d: usize, bw: u32, c: u32) -> SliceRequest {
        SliceRequest::new(id, NodeId(s), NodeId(d), bw, c)
    }

    #[test]
    fn sorted_orders_by_compute_then_bandwidth() {
        let topo = two_node(300.0, 4000);
        let batch = [req(1, 0, 1, 10, 5), req(2, 0, 1, 1, 10), req(3, 0, 1, 5, 10)];
        let out = sorted_baseline(&batch, &topo, &StrategyConfig::default());
        let ids: Vec<u64> = out.iter().map(|(id, _)| id.0).collect();
        assert_eq!(ids, vec![3, 2, 1]);
        assert!(out.iter().all(|(_, r)| r.is_accepted()));
    }

    #[test]
    fn sorted_matches_greedy_on_single_request() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 50), (2, 20)]);
        let r = req(1, 0, 2, 8, 10);
        let cfg = StrategyConfig::default();
        let sorted = sorted_baseline(std::slice::from_ref(&r), &topo, &cfg);
        assert_eq!(sorted[0].1, greedy_baseline(&r, &topo, &cfg));
    }

    #[test]
    fn sorted_prefers_largest_residual() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 20), (2, 50)]);
        let MappingResult::Accepted(m) = sorted_baseline(&[req(1, 0, 2, 8, 10)], &topo, &StrategyConfig::default())[0].1.clone()
        else {
            panic!()
        };
        assert_eq!(m.placements[0].node, NodeId(2));
    }

    #[test]
    fn empty_capacity_blocks_everything() {
        let topo = two_node(300.0, 0);
        let out = sorted_baseline(&[req(1, 0, 1, 1, 5), req(2, 0, 1, 3, 1)], &topo, &StrategyConfig::default());
        assert!(out.iter().all(|(_, r)| *r == MappingResult::Blocked(BlockReason::NoCompute)));
        assert_eq!(greedy_baseline(&req(3, 0, 1, 1, 1), &topo, &StrategyConfig::default()), MappingResult::Blocked(BlockReason::NoCompute));
    }

    #[test]
    fn greedy_pristine_first_core_first_slot() {
        let topo = two_node(300.0, 4000);
        let MappingResult::Accepted(m) = greedy_baseline(&req(1, 0, 1, 10, 5), &topo, &StrategyConfig::default()) else { panic!() };
        assert_eq!((m.segments[0].core, m.segments[0].slots), (0, SlotBlock::new(0, 10)));
    }

    #[test]
    fn greedy_skips_fragmented_core() {
        let mut topo = two_node(300.0, 4000);
        for (i, start) in (0..120).step_by(10).enumerate() {
            fill(&mut topo, LinkId(0), 0, SlotBlock::new(start, 1), 100 + i as u64);
        }
        let MappingResult::Accepted(m) = greedy_baseline(&req(1, 0, 1, 10, 5), &topo, &StrategyConfig::default()) else { panic!() };
        assert_eq!((m.segments[0].core, m.segments[0].slots.start), (1, 0));
    }

    #[test]
    fn greedy_does_not_split_compute() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 6), (2, 6)]);
        assert_eq!(greedy_baseline(&req(1, 0, 2, 1, 10), &topo, &StrategyConfig::default()), MappingResult::Blocked(BlockReason::NoCompute));
    }
}
