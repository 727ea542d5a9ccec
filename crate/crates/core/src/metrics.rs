//! Provisioning cost, utilization, blocking ratio, and an independent
//! constraint checker.
//!
//! The checker works on raw `(link, core, slot)` cells, either expanded from a
//! proposed mapping or read back from the owner maps of committed state. It
//! does not call into routing, spectrum assignment, or any strategy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::model::{LinkId, Mapping, NodeId, RequestId, SliceRequest, Topology};
use crate::spectrum::Modulation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub unit_cost_compute: f64,
    /// Charged per slot per link.
    pub unit_cost_spectrum: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { unit_cost_compute: 400.0, unit_cost_spectrum: 40.0 }
    }
}

impl CostModel {
    pub fn is_valid(&self) -> bool {
        self.unit_cost_compute > 0.0
            && self.unit_cost_spectrum > 0.0
            && self.unit_cost_compute.is_finite()
            && self.unit_cost_spectrum.is_finite()
    }
}

/// Compute units times the compute price plus slots held on each link times
/// the spectrum price.
pub fn request_cost(mapping: &Mapping, cost: &CostModel) -> f64 {
    let compute: u64 = mapping.placements.iter().map(|p| p.units as u64).sum();
    let slot_links: u64 = mapping.segments.iter().map(|s| (s.slots.len * s.path.links.len()) as u64).sum();
    compute as f64 * cost.unit_cost_compute + slot_links as f64 * cost.unit_cost_spectrum
}

/// Occupied slots over links x cores x slots per core.
pub fn spectrum_utilization(topology: &Topology) -> f64 {
    let total = topology.graph().total_slots();
    if total == 0 {
        return 0.0;
    }
    topology.occupied_slots() as f64 / total as f64
}

pub fn blocking_ratio(accepted: u64, blocked: u64) -> Result<f64, MetricsError> {
    let total = accepted + blocked;
    if total == 0 {
        return Err(MetricsError::DivisionByZeroGuard);
    }
    Ok(blocked as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// Segment length within the declared format's reach; segments chain
    /// source to destination.
    C1Reach,
    /// One unbroken block per link of the right size.
    C2Contiguity,
    /// Same core and block on every link of a segment.
    C3Continuity,
    /// Compute totals the demand and fits capacity.
    C4Compute,
    /// Every core of a segment lies in one core group.
    C5CoreGroup,
}

impl Constraint {
    pub const ALL: [Constraint; 5] =
        [Constraint::C1Reach, Constraint::C2Contiguity, Constraint::C3Continuity, Constraint::C4Compute, Constraint::C5CoreGroup];

    pub fn label(&self) -> &'static str {
        match self {
            Constraint::C1Reach => "C1 reach",
            Constraint::C2Contiguity => "C2 contiguity",
            Constraint::C3Continuity => "C3 continuity",
            Constraint::C4Compute => "C4 compute",
            Constraint::C5CoreGroup => "C5 core group",
        }
    }
}

/// Per-constraint failure messages. Empty lists mean pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintReport {
    failures: BTreeMap<Constraint, Vec<String>>,
}

impl ConstraintReport {
    fn fail(&mut self, c: Constraint, message: String) {
        self.failures.entry(c).or_default().push(message);
    }

    pub fn passed(&self, c: Constraint) -> bool {
        !self.failures.contains_key(&c)
    }

    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failures(&self, c: Constraint) -> &[String] {
        self.failures.get(&c).map_or(&[], Vec::as_slice)
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in Constraint::ALL {
            match self.failures.get(&c) {
                None => writeln!(f, "{}: pass", c.label())?,
                Some(msgs) => writeln!(f, "{}: FAIL ({})", c.label(), msgs.join("; "))?,
            }
        }
        Ok(())
    }
}

/// A segment as raw resource usage.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentUsage {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub modulation: Modulation,
    /// `(link, core, slot)` cells held for this segment.
    pub cells: BTreeSet<(LinkId, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsageRecord {
    pub segments: Vec<SegmentUsage>,
    pub placements: Vec<(NodeId, u32)>,
}

impl UsageRecord {
    /// Cells exactly as a mapping declares them.
    pub fn from_mapping(mapping: &Mapping) -> Self {
        let segments = mapping
            .segments
            .iter()
            .map(|s| SegmentUsage {
                nodes: s.path.nodes.clone(),
                links: s.path.links.clone(),
                modulation: s.modulation,
                cells: s
                    .path
                    .links
                    .iter()
                    .flat_map(|&l| (s.slots.start..s.slots.start + s.slots.len).map(move |slot| (l, s.core, slot)))
                    .collect(),
            })
            .collect();
        UsageRecord { segments, placements: mapping.placements.iter().map(|p| (p.node, p.units)).collect() }
    }

    /// Cells the grids attribute to `id` on each segment's links, read from
    /// the committed owner maps. `None` when `id` is not active.
    pub fn from_state(topology: &Topology, id: RequestId) -> Option<Self> {
        let mapping = topology.active_mapping(id)?;
        let graph = topology.graph();
        let segments = mapping
            .segments
            .iter()
            .map(|s| {
                let mut cells = BTreeSet::new();
                for &link in &s.path.links {
                    for core in 0..graph.cores_per_link() {
                        let grid = topology.grid(link, core);
                        for slot in 0..grid.len() {
                            if grid.owner(slot) == Some(id) {
                                cells.insert((link, core, slot));
                            }
                        }
                    }
                }
                SegmentUsage { nodes: s.path.nodes.clone(), links: s.path.links.clone(), modulation: s.modulation, cells }
            })
            .collect();
        Some(UsageRecord { segments, placements: mapping.placements.iter().map(|p| (p.node, p.units)).collect() })
    }
}

/// Whether the compute in a usage record is already counted in the node state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeState {
    /// Placements must fit the current residual.
    Proposed,
    /// Placements are included in the committed totals, which must not exceed capacity.
    Committed,
}

/// Checks a usage record against every constraint.
pub fn validate_usage(topology: &Topology, request: &SliceRequest, usage: &UsageRecord, state: ComputeState) -> ConstraintReport {
    let graph = topology.graph();
    let mut report = ConstraintReport::default();
    let table = graph.modulation();

    if usage.segments.is_empty() {
        report.fail(Constraint::C1Reach, "no segments".into());
    }
    let mut at = request.source;
    for (i, seg) in usage.segments.iter().enumerate() {
        // Walk the link list from the declared start node.
        if seg.nodes.first() != Some(&at) {
            report.fail(Constraint::C1Reach, format!("segment {i} does not start where the previous one ended"));
        }
        let mut node = at;
        let mut length = 0.0;
        let mut walk_ok = seg.nodes.len() == seg.links.len() + 1 && !seg.links.is_empty();
        for (j, &lid) in seg.links.iter().enumerate() {
            let Some(link) = graph.links().get(lid.0) else {
                walk_ok = false;
                break;
            };
            let next = if link.endpoints.0 == node {
                link.endpoints.1
            } else if link.endpoints.1 == node {
                link.endpoints.0
            } else {
                walk_ok = false;
                break;
            };
            if seg.nodes.get(j + 1) != Some(&next) {
                walk_ok = false;
            }
            length += link.distance_km;
            node = next;
        }
        if !walk_ok {
            report.fail(Constraint::C1Reach, format!("segment {i} links do not form its node sequence"));
        }
        at = node;
        match table.entries().iter().find(|e| e.format == seg.modulation) {
            None => report.fail(Constraint::C1Reach, format!("segment {i} uses {} which is not offered", seg.modulation)),
            Some(e) if length > e.reach_km => report.fail(
                Constraint::C1Reach,
                format!("segment {i} is {length} km but {} reaches {} km", seg.modulation, e.reach_km),
            ),
            Some(e) => {
                let expected = request.bandwidth_gbps as usize * e.slots_per_gbps as usize;
                check_spectrum(graph.slots_per_core(), i, seg, expected, &mut report);
            }
        }

        let cores: BTreeSet<usize> = seg.cells.iter().map(|&(_, c, _)| c).collect();
        let groups: BTreeSet<Option<usize>> = cores
            .iter()
            .map(|&c| graph.core_groups().groups().iter().position(|g| g.contains(&c)))
            .collect();
        if groups.len() > 1 || groups.contains(&None) {
            report.fail(Constraint::C5CoreGroup, format!("segment {i} uses cores {cores:?} across groups"));
        }
    }
    if at != request.destination {
        report.fail(Constraint::C1Reach, "segments do not end at the destination".into());
    }

    let total: u64 = usage.placements.iter().map(|&(_, u)| u as u64).sum();
    if total != request.compute_units as u64 {
        report.fail(Constraint::C4Compute, format!("placed {total} units, demand is {}", request.compute_units));
    }
    let on_route: BTreeSet<NodeId> = usage.segments.iter().flat_map(|s| s.nodes.iter().copied()).collect();
    let mut per_node: BTreeMap<NodeId, u64> = BTreeMap::new();
    for &(node, units) in &usage.placements {
        *per_node.entry(node).or_default() += units as u64;
        if !on_route.contains(&node) {
            report.fail(Constraint::C4Compute, format!("compute at {node} which is off the route"));
        }
    }
    for (node, units) in per_node {
        match topology.compute_node(node) {
            None => report.fail(Constraint::C4Compute, format!("{node} has no compute")),
            Some(c) => {
                let ok = match state {
                    ComputeState::Proposed => units <= (c.capacity as u64).saturating_sub(c.committed as u64),
                    ComputeState::Committed => c.committed <= c.capacity && units <= c.committed as u64,
                };
                if !ok {
                    report.fail(
                        Constraint::C4Compute,
                        format!("{node}: {units} units against capacity {} committed {}", c.capacity, c.committed),
                    );
                }
            }
        }
    }
    report
}

fn check_spectrum(slots: usize, i: usize, seg: &SegmentUsage, expected: usize, report: &mut ConstraintReport) {
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
    for &link in &seg.links {
        let on_link: Vec<(usize, usize)> =
            seg.cells.iter().filter(|&&(l, _, _)| l == link).map(|&(_, c, s)| (c, s)).collect();
        let cores: BTreeSet<usize> = on_link.iter().map(|&(c, _)| c).collect();
        if cores.len() != 1 {
            report.fail(Constraint::C2Contiguity, format!("segment {i} holds {} cores on {link}", cores.len()));
            continue;
        }
        let core = *cores.iter().next().unwrap();
        let lo = on_link.iter().map(|&(_, s)| s).min().unwrap();
        let hi = on_link.iter().map(|&(_, s)| s).max().unwrap();
        if hi - lo + 1 != on_link.len() {
            report.fail(Constraint::C2Contiguity, format!("segment {i} has a gap on {link} core {}", core + 1));
        }
        if on_link.len() != expected {
            report.fail(Constraint::C2Contiguity, format!("segment {i} holds {} slots on {link}, needs {expected}", on_link.len()));
        }
        if hi >= slots {
            report.fail(Constraint::C2Contiguity, format!("segment {i} exceeds the grid on {link}"));
        }
        blocks.push((core, lo, hi));
    }
    if blocks.windows(2).any(|w| w[0] != w[1]) {
        report.fail(Constraint::C3Continuity, format!("segment {i} changes core or slots between links"));
    }
}

/// Checks a proposed mapping against the current state before it is committed.
pub fn validate_constraints(topology: &Topology, request: &SliceRequest, mapping: &Mapping) -> ConstraintReport {
    validate_usage(topology, request, &UsageRecord::from_mapping(mapping), ComputeState::Proposed)
}

/// Checks a committed request using the cells its id owns in the grids.
pub fn audit_committed(topology: &Topology, request: &SliceRequest) -> ConstraintReport {
    match UsageRecord::from_state(topology, request.id) {
        Some(usage) => validate_usage(topology, request, &usage, ComputeState::Committed),
        None => {
            let mut r = ConstraintReport::default();
            r.fail(Constraint::C1Reach, format!("{} is not active", request.id));
            r
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fill, line_topology, two_node};
    use crate::model::{ComputePlacement, SegmentAllocation, SlotBlock};
    use crate::routing::Path;

    fn segment(topo: &Topology, from: usize, to: usize, modulation: Modulation, core: usize, block: SlotBlock) -> SegmentAllocation {
        let path = topo.graph().k_shortest_paths(NodeId(from), NodeId(to), 1).unwrap()[0].clone();
        SegmentAllocation { endpoints: (NodeId(from), NodeId(to)), path, modulation, core, slots: block }
    }

    #[test]
    fn cost_examples() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 4000)]);
        let one = Mapping {
            segments: vec![segment(&topo, 0, 1, Modulation::Qam16, 0, SlotBlock::new(0, 10))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 5 }],
        };
        assert_eq!(request_cost(&one, &CostModel::default()), 2400.0);
        let two = Mapping {
            segments: vec![segment(&topo, 0, 2, Modulation::Qpsk, 0, SlotBlock::new(0, 20))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 5 }],
        };
        assert_eq!(request_cost(&two, &CostModel::default()), 3600.0);
        assert_eq!(request_cost(&Mapping::default(), &CostModel::default()), 0.0);
    }

    #[test]
    fn cost_ignores_segment_order() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 4000)]);
        let a = segment(&topo, 0, 1, Modulation::Qam16, 0, SlotBlock::new(0, 10));
        let b = segment(&topo, 1, 2, Modulation::Qam16, 2, SlotBlock::new(4, 10));
        let m1 = Mapping { segments: vec![a.clone(), b.clone()], placements: vec![] };
        let m2 = Mapping { segments: vec![b, a], placements: vec![] };
        assert_eq!(request_cost(&m1, &CostModel::default()), request_cost(&m2, &CostModel::default()));
    }

    #[test]
    fn utilization_examples() {
        let mut topo = two_node(300.0, 100);
        assert_eq!(spectrum_utilization(&topo), 0.0);
        fill(&mut topo, LinkId(0), 0, SlotBlock::new(0, 10), 1);
        assert_eq!(spectrum_utilization(&topo), 10.0 / 840.0);
        for core in 0..7 {
            let start = if core == 0 { 10 } else { 0 };
            fill(&mut topo, LinkId(0), core, SlotBlock::new(start, 120 - start), 10 + core as u64);
        }
        assert_eq!(spectrum_utilization(&topo), 1.0);
    }

    #[test]
    fn blocking_examples() {
        assert_eq!(blocking_ratio(100, 0), Ok(0.0));
        assert_eq!(blocking_ratio(0, 100), Ok(1.0));
        assert_eq!(blocking_ratio(75, 25), Ok(0.25));
        assert_eq!(blocking_ratio(0, 0), Err(MetricsError::DivisionByZeroGuard));
    }

    fn request(bw: u32, c: u32) -> SliceRequest {
        SliceRequest::new(1, NodeId(0), NodeId(2), bw, c)
    }

    fn good_mapping(topo: &Topology) -> Mapping {
        Mapping {
            segments: vec![segment(topo, 0, 2, Modulation::Qpsk, 0, SlotBlock::new(0, 20))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 5 }],
        }
    }

    #[test]
    fn valid_mapping_passes_before_and_after_commit() {
        let mut topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 4000)]);
        let m = good_mapping(&topo);
        let r = request(10, 5);
        assert!(validate_constraints(&topo, &r, &m).all_passed());
        topo.reserve(&r, &m).unwrap();
        let audit = audit_committed(&topo, &r);
        assert!(audit.all_passed(), "{audit}");
    }

    #[test]
    fn detects_each_violation() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 4000)]);
        let r = request(10, 5);

        let mut m = good_mapping(&topo);
        m.segments[0].modulation = Modulation::Qam16;
        m.segments[0].slots.len = 10;
        assert!(!validate_constraints(&topo, &r, &m).passed(Constraint::C1Reach));

        let mut usage = UsageRecord::from_mapping(&good_mapping(&topo));
        usage.segments[0].cells.remove(&(LinkId(0), 0, 5));
        usage.segments[0].cells.insert((LinkId(0), 0, 25));
        let rep = validate_usage(&topo, &r, &usage, ComputeState::Proposed);
        assert!(!rep.passed(Constraint::C2Contiguity));

        let mut usage = UsageRecord::from_mapping(&good_mapping(&topo));
        usage.segments[0].cells =
            usage.segments[0].cells.iter().map(|&(l, c, s)| if l == LinkId(1) { (l, c, s + 1) } else { (l, c, s) }).collect();
        let rep = validate_usage(&topo, &r, &usage, ComputeState::Proposed);
        assert!(rep.passed(Constraint::C2Contiguity) && !rep.passed(Constraint::C3Continuity));

        let mut usage = UsageRecord::from_mapping(&good_mapping(&topo));
        usage.segments[0].cells =
            usage.segments[0].cells.iter().map(|&(l, c, s)| if l == LinkId(1) { (l, 1, s) } else { (l, c, s) }).collect();
        let rep = validate_usage(&topo, &r, &usage, ComputeState::Proposed);
        assert!(!rep.passed(Constraint::C5CoreGroup) && !rep.passed(Constraint::C3Continuity));

        let mut m = good_mapping(&topo);
        m.placements[0].units = 4;
        assert!(!validate_constraints(&topo, &r, &m).passed(Constraint::C4Compute));
        let mut m = good_mapping(&topo);
        m.placements[0].units = 5000;
        assert!(!validate_constraints(&topo, &request(10, 5000), &m).passed(Constraint::C4Compute));
    }

    #[test]
    fn broken_chain_fails_reach() {
        let topo = line_topology(&[300.0, 300.0], 7, 120, &[(1, 4000)]);
        let mut m = good_mapping(&topo);
        m.segments[0] = segment(&topo, 0, 1, Modulation::Qam16, 0, SlotBlock::new(0, 10));
        let r = request(10, 5);
        assert!(!validate_constraints(&topo, &r, &m).passed(Constraint::C1Reach));
        let detour = Path::from_links(topo.graph(), NodeId(1), &[LinkId(0)]).unwrap();
        m.segments[0].path = detour;
        assert!(!validate_constraints(&topo, &r, &m).passed(Constraint::C1Reach));
    }
}
