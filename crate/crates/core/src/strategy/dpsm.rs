use crate::model::{BlockReason, ComputePlacement, Mapping, MappingResult, NodeId, SliceRequest, Topology};
use crate::routing::Path;
use crate::spectrum::{allocate_segment, SpectrumView};

use super::{capable_on_path, fill_in_order, furthest, Strategy, StrategyConfig, Trace};

/// End-to-end lightpath over the first feasible of the k shortest paths, with
/// compute at the first path node that can hold it.
#[derive(Debug, Clone)]
pub struct Dpsm {
    config: StrategyConfig,
}

impl Dpsm {
    pub fn new(config: StrategyConfig) -> Self {
        Dpsm { config }
    }
}

impl Strategy for Dpsm {
    fn name(&self) -> &'static str {
        "dpsm"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run_dpsm(request, topology, &self.config, trace)
    }
}

/// Splits the path at the compute node closest to its midpoint so each side
/// gets its own modulation; falls back to [`Dpsm`].
#[derive(Debug, Clone)]
pub struct DpsmBalanced {
    config: StrategyConfig,
}

impl DpsmBalanced {
    pub fn new(config: StrategyConfig) -> Self {
        DpsmBalanced { config }
    }
}

impl Strategy for DpsmBalanced {
    fn name(&self) -> &'static str {
        "dpsm-b"
    }

    fn map(&self, request: &SliceRequest, topology: &Topology, trace: &mut Trace) -> MappingResult {
        run_dpsm_b(request, topology, &self.config, trace)
    }
}

pub fn dpsm(request: &SliceRequest, topology: &Topology, config: &StrategyConfig) -> MappingResult {
    run_dpsm(request, topology, config, &mut Trace::off())
}

pub fn dpsm_b(request: &SliceRequest, topology: &Topology, config: &StrategyConfig) -> MappingResult {
    run_dpsm_b(request, topology, config, &mut Trace::off())
}

/// All compute on the first path node that holds it alone; otherwise, when
/// splitting is allowed, a greedy fill along the path.
fn first_fit_compute(topology: &Topology, path: &Path, demand: u32, allow_split: bool) -> Option<Vec<ComputePlacement>> {
    let capable = capable_on_path(topology, path);
    let total: u64 = capable.iter().map(|c| c.residual as u64).sum();
    if total < demand as u64 {
        return None;
    }
    if let Some(c) = capable.iter().find(|c| c.residual >= demand) {
        return Some(vec![ComputePlacement { node: c.node, units: demand }]);
    }
    if allow_split {
        let nodes: Vec<NodeId> = capable.iter().map(|c| c.node).collect();
        return Some(fill_in_order(topology, &nodes, demand));
    }
    None
}

fn run_dpsm(request: &SliceRequest, topology: &Topology, config: &StrategyConfig, trace: &mut Trace) -> MappingResult {
    let graph = topology.graph();
    let paths = match graph.k_shortest_paths(request.source, request.destination, config.k_paths_dpsm) {
        Ok(p) => p,
        Err(e) => {
            trace.note(|| format!("dpsm: {e}"));
            return MappingResult::Blocked(BlockReason::NoPath);
        }
    };
    let mut last = BlockReason::NoPath;
    for (i, path) in paths.iter().enumerate() {
        trace.note(|| format!("dpsm: path {} {}", i + 1, path.describe(graph)));
        let Some(placements) = first_fit_compute(topology, path, request.compute_units, config.allow_colocation) else {
            trace.note(|| "  compute: insufficient along path".into());
            last = furthest(last, BlockReason::NoCompute);
            continue;
        };
        trace.note(|| format!("  compute: {}", describe_placements(topology, &placements)));
        let view = SpectrumView::new(topology);
        match allocate_segment(&view, (request.source, request.destination), path, request.bandwidth_gbps, config.search_policy()) {
            Ok(seg) => {
                trace.note(|| {
                    format!("  spectrum: {} core {} slots {}..{}", seg.modulation, seg.core + 1, seg.slots.start, seg.slots.end())
                });
                return MappingResult::Accepted(Mapping { segments: vec![seg], placements });
            }
            Err(reason) => {
                trace.note(|| format!("  spectrum: {reason}"));
                last = furthest(last, reason);
            }
        }
    }
    MappingResult::Blocked(last)
}

/// Compute site(s) for a balanced split of `path`: positions along the path
/// and the placements.
fn balanced_sites(
    topology: &Topology,
    path: &Path,
    demand: u32,
    allow_split: bool,
    trace: &mut Trace,
) -> Option<(Vec<usize>, Vec<ComputePlacement>)> {
    let graph = topology.graph();
    let capable = capable_on_path(topology, path);
    let total: u64 = capable.iter().map(|c| c.residual as u64).sum();
    if total < demand as u64 {
        return None;
    }
    let prefix: Vec<f64> = (0..path.nodes.len()).map(|pos| path.distance_to(graph, pos)).collect();
    let length = path.distance_km;
    let imbalance = |pos: usize| (prefix[pos] - (length - prefix[pos])).abs();
    for c in &capable {
        trace.note(|| {
            format!(
                "  delta {} = |{:.0} - {:.0}| = {:.0} (residual {})",
                graph.name(c.node),
                prefix[c.pos],
                length - prefix[c.pos],
                imbalance(c.pos),
                c.residual
            )
        });
    }

    let single = capable
        .iter()
        .filter(|c| c.residual >= demand)
        .min_by(|a, b| imbalance(a.pos).total_cmp(&imbalance(b.pos)).then(a.pos.cmp(&b.pos)));
    if let Some(best) = single {
        return Some((vec![best.pos], vec![ComputePlacement { node: best.node, units: demand }]));
    }
    if !allow_split {
        return None;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, a) in capable.iter().enumerate() {
        for b in &capable[i + 1..] {
            if (a.residual as u64 + b.residual as u64) < demand as u64 {
                continue;
            }
            let worst = prefix[a.pos].max(prefix[b.pos] - prefix[a.pos]).max(length - prefix[b.pos]);
            if best.is_none_or(|(w, _, _)| worst < w) {
                best = Some((worst, a.pos, b.pos));
            }
        }
    }
    let (_, p1, p2) = best?;
    let placements = fill_in_order(topology, &[path.nodes[p1], path.nodes[p2]], demand);
    Some((vec![p1, p2], placements))
}

fn run_dpsm_b(request: &SliceRequest, topology: &Topology, config: &StrategyConfig, trace: &mut Trace) -> MappingResult {
    let graph = topology.graph();
    let mut last = BlockReason::NoPath;
    match graph.k_shortest_paths(request.source, request.destination, config.k_paths_dpsm) {
        Err(e) => trace.note(|| format!("dpsm-b: {e}")),
        Ok(paths) => {
            for (i, path) in paths.iter().enumerate() {
                trace.note(|| format!("dpsm-b: path {} {}", i + 1, path.describe(graph)));
                let Some((sites, placements)) =
                    balanced_sites(topology, path, request.compute_units, config.allow_colocation, trace)
                else {
                    trace.note(|| "  compute: insufficient along path".into());
                    last = furthest(last, BlockReason::NoCompute);
                    continue;
                };
                trace.note(|| format!("  compute: {}", describe_placements(topology, &placements)));

                let mut cuts = vec![0];
                cuts.extend(sites.iter().copied().filter(|&p| p != 0 && p != path.nodes.len() - 1));
                cuts.push(path.nodes.len() - 1);
                let mut segments = Vec::new();
                let mut failed = None;
                for w in cuts.windows(2) {
                    let sub = path.slice(graph, w[0], w[1]);
                    let view = SpectrumView::with_pending(topology, &segments);
                    match allocate_segment(&view, (sub.source(), sub.target()), &sub, request.bandwidth_gbps, config.search_policy()) {
                        Ok(seg) => {
                            trace.note(|| {
                                format!(
                                    "  segment {}: {} core {} slots {}..{}",
                                    sub.describe(graph),
                                    seg.modulation,
                                    seg.core + 1,
                                    seg.slots.start,
                                    seg.slots.end()
                                )
                            });
                            segments.push(seg);
                        }
                        Err(reason) => {
                            trace.note(|| format!("  segment {}: {reason}", sub.describe(graph)));
                            failed = Some(reason);
                            break;
                        }
                    }
                }
                match failed {
                    None => return MappingResult::Accepted(Mapping { segments, placements }),
                    Some(reason) => last = furthest(last, reason),
                }
            }
        }
    }
    if config.fallback_enabled {
        trace.note(|| "dpsm-b: balanced placement failed, falling back to dpsm".into());
        return run_dpsm(request, topology, config, trace);
    }
    MappingResult::Blocked(last)
}

pub(super) fn describe_placements(topology: &Topology, placements: &[ComputePlacement]) -> String {
    placements
        .iter()
        .map(|p| format!("{} units at {}", p.units, topology.graph().name(p.node)))
        .collect::<Vec<_>>()
        .join(", ")
}
