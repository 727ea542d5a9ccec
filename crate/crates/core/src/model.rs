//! Substrate graph, slice requests, allocations, and the resource state that
//! every mapper reads and the simulator mutates.
//!
//! All spectrum and compute mutation goes through [`Topology::reserve`] and
//! [`Topology::release`], so the no-overlap and capacity invariants are
//! enforced in exactly one place.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::ResourceError;
use crate::routing::{Path, PathCache};
use crate::spectrum::{Modulation, ModulationTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// An undirected fiber. Both directions share one spectrum grid per core.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub distance_km: f64,
}

impl Link {
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        match self.endpoints {
            (a, b) if a == node => Some(b),
            (a, b) if b == node => Some(a),
            _ => None,
        }
    }
}

/// Partition of the cores of a fiber into mutually non-adjacent groups.
///
/// Stored 0-based; [`CoreGroups::from_one_based`] accepts the 1-based core
/// numbering used in config files and reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreGroups {
    groups: Vec<Vec<usize>>,
}

impl CoreGroups {
    /// G1 = {1,3,5}, G2 = {2,4,6}, G3 = {7} for the hexagonal 7-core fiber.
    pub fn seven_core() -> Self {
        CoreGroups { groups: vec![vec![0, 2, 4], vec![1, 3, 5], vec![6]] }
    }

    /// Default grouping for a fiber with `cores` cores: the standard 7-core
    /// grouping, otherwise every core in its own group.
    pub fn default_for(cores: usize) -> Self {
        if cores == 7 {
            Self::seven_core()
        } else {
            CoreGroups { groups: (0..cores).map(|c| vec![c]).collect() }
        }
    }

    pub fn new(groups: Vec<Vec<usize>>, cores: usize) -> Result<Self, String> {
        let problems = partition_problems(&groups, cores);
        if problems.is_empty() {
            Ok(CoreGroups { groups })
        } else {
            Err(problems.join("; "))
        }
    }

    pub fn from_one_based(groups: &[Vec<usize>], cores: usize) -> Result<Self, String> {
        if groups.iter().flatten().any(|&c| c == 0) {
            return Err("core numbers are 1-based; found core 0".into());
        }
        Self::new(groups.iter().map(|g| g.iter().map(|c| c - 1).collect()).collect(), cores)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, core: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&core))
    }
}

/// Adjacency in the hexagonal 7-core layout: cores 0..6 form the outer ring,
/// core 6 sits in the center and touches all of them.
pub fn seven_core_adjacent(a: usize, b: usize) -> bool {
    if a == b || a > 6 || b > 6 {
        return false;
    }
    if a == 6 || b == 6 {
        return true;
    }
    (a + 1) % 6 == b || (b + 1) % 6 == a
}

/// Problems with a proposed 0-based core partition; empty when valid.
pub fn partition_problems(groups: &[Vec<usize>], cores: usize) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = vec![0usize; cores];
    for (gi, group) in groups.iter().enumerate() {
        if group.is_empty() {
            problems.push(format!("group {} is empty", gi + 1));
        }
        for &c in group {
            if c >= cores {
                problems.push(format!("group {} names core {} but fibers have {cores} cores", gi + 1, c + 1));
            } else {
                seen[c] += 1;
            }
        }
        if cores == 7 {
            for (i, &a) in group.iter().enumerate() {
                for &b in &group[i + 1..] {
                    if seven_core_adjacent(a, b) {
                        problems.push(format!(
                            "group {} holds adjacent cores {} and {}",
                            gi + 1,
                            a + 1,
                            b + 1
                        ));
                    }
                }
            }
        }
    }
    for (c, &n) in seen.iter().enumerate() {
        match n {
            0 => problems.push(format!("core {} is not covered by any group", c + 1)),
            1 => {}
            _ => problems.push(format!("core {} appears in {n} groups", c + 1)),
        }
    }
    problems
}

/// Immutable structure of the substrate: nodes, fibers, grid dimensions,
/// core grouping, and the modulation table.
#[derive(Debug)]
pub struct Graph {
    names: Vec<String>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    cores_per_link: usize,
    slots_per_core: usize,
    core_groups: CoreGroups,
    modulation: ModulationTable,
    paths: PathCache,
}

impl Graph {
    /// Builds a graph after checking that it is connected, every distance is
    /// positive, and no link is a self-loop.
    pub fn new(
        names: Vec<String>,
        edges: Vec<(NodeId, NodeId, f64)>,
        cores_per_link: usize,
        slots_per_core: usize,
        core_groups: CoreGroups,
        modulation: ModulationTable,
    ) -> Result<Self, ResourceError> {
        let n = names.len();
        if n < 2 {
            return Err(ResourceError::InvalidTopology("at least two nodes are required".into()));
        }
        if cores_per_link == 0 || slots_per_core == 0 {
            return Err(ResourceError::InvalidTopology("cores and slots must be positive".into()));
        }
        if let Some(bad) = core_groups.groups().iter().flatten().find(|&&c| c >= cores_per_link) {
            return Err(ResourceError::InvalidTopology(format!(
                "core group names core {} beyond {cores_per_link} cores",
                bad + 1
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut links = Vec::with_capacity(edges.len());
        for (i, (a, b, distance_km)) in edges.into_iter().enumerate() {
            if a.0 >= n || b.0 >= n {
                return Err(ResourceError::InvalidTopology(format!("link {i} names an unknown node")));
            }
            if a == b {
                return Err(ResourceError::InvalidTopology(format!("link {i} is a self-loop")));
            }
            if !(distance_km > 0.0 && distance_km.is_finite()) {
                return Err(ResourceError::InvalidTopology(format!(
                    "link {i} has non-positive distance {distance_km}"
                )));
            }
            let id = LinkId(i);
            adjacency[a.0].push((b, id));
            adjacency[b.0].push((a, id));
            links.push(Link { id, endpoints: (a, b), distance_km });
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        let graph = Graph {
            names,
            links,
            adjacency,
            cores_per_link,
            slots_per_core,
            core_groups,
            modulation,
            paths: PathCache::new(n, PathCache::DEFAULT_DEPTH),
        };
        if !graph.is_connected() {
            return Err(ResourceError::InvalidTopology("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(NodeId)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    /// Neighbors of `node` with the connecting link, sorted by neighbor id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node.0]
    }

    pub fn cores_per_link(&self) -> usize {
        self.cores_per_link
    }

    pub fn slots_per_core(&self) -> usize {
        self.slots_per_core
    }

    pub fn core_groups(&self) -> &CoreGroups {
        &self.core_groups
    }

    pub fn modulation(&self) -> &ModulationTable {
        &self.modulation
    }

    pub(crate) fn path_cache(&self) -> &PathCache {
        &self.paths
    }

    /// Total slot count of the network: links x cores x slots per core.
    pub fn total_slots(&self) -> usize {
        self.links.len() * self.cores_per_link * self.slots_per_core
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in self.neighbors(v) {
                if !seen[w.0] {
                    seen[w.0] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Contiguous slot range `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotBlock {
    pub start: usize,
    pub len: usize,
}

impl SlotBlock {
    pub fn new(start: usize, len: usize) -> Self {
        SlotBlock { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn overlaps(&self, other: &SlotBlock) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Occupancy of one core on one link: a bitmap plus the owner of every slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreGrid {
    occupied: Vec<u64>,
    owners: Vec<Option<RequestId>>,
}

impl CoreGrid {
    pub fn new(slots: usize) -> Self {
        CoreGrid { occupied: vec![0; slots.div_ceil(64)], owners: vec![None; slots] }
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn is_free(&self, slot: usize) -> bool {
        self.owners[slot].is_none()
    }

    pub fn owner(&self, slot: usize) -> Option<RequestId> {
        self.owners[slot]
    }

    pub fn free_count(&self) -> usize {
        self.len() - self.occupied.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    /// Occupancy bitmap, bit `i` of word `i / 64` set when slot `i` is taken.
    pub fn occupancy_words(&self) -> &[u64] {
        &self.occupied
    }

    fn block_is_free(&self, block: SlotBlock) -> bool {
        block.end() <= self.len() && block.range().all(|s| self.owners[s].is_none())
    }

    fn occupy(&mut self, block: SlotBlock, owner: RequestId) {
        for s in block.range() {
            debug_assert!(self.owners[s].is_none());
            self.owners[s] = Some(owner);
            self.occupied[s / 64] |= 1 << (s % 64);
        }
    }

    fn vacate(&mut self, block: SlotBlock, owner: RequestId) {
        for s in block.range() {
            debug_assert_eq!(self.owners[s], Some(owner));
            self.owners[s] = None;
            self.occupied[s / 64] &= !(1 << (s % 64));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputeNode {
    pub capacity: u32,
    pub committed: u32,
}

impl ComputeNode {
    pub fn residual(&self) -> u32 {
        self.capacity - self.committed
    }
}

/// A slice demand between two endpoints. Times are in hours.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRequest {
    pub id: RequestId,
    pub source: NodeId,
    pub destination: NodeId,
    pub bandwidth_gbps: u32,
    pub compute_units: u32,
    pub arrival_time: f64,
    pub holding_time: f64,
}

impl SliceRequest {
    /// A request with zero arrival time and unit holding time, for tests and traces.
    pub fn new(id: u64, source: NodeId, destination: NodeId, bandwidth_gbps: u32, compute_units: u32) -> Self {
        SliceRequest {
            id: RequestId(id),
            source,
            destination,
            bandwidth_gbps,
            compute_units,
            arrival_time: 0.0,
            holding_time: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.source == self.destination {
            return Err(ResourceError::InvalidRequest(format!("{}: source equals destination", self.id)));
        }
        if self.bandwidth_gbps == 0 || self.compute_units == 0 {
            return Err(ResourceError::InvalidRequest(format!("{}: demands must be at least 1", self.id)));
        }
        if self.holding_time.is_nan() || self.holding_time <= 0.0 {
            return Err(ResourceError::InvalidRequest(format!("{}: holding time must be positive", self.id)));
        }
        Ok(())
    }
}

/// One lightpath: a single core and slot block held on every link of `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAllocation {
    pub endpoints: (NodeId, NodeId),
    pub path: Path,
    pub modulation: Modulation,
    /// 0-based core index.
    pub core: usize,
    pub slots: SlotBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputePlacement {
    pub node: NodeId,
    pub units: u32,
}

/// An accepted embedding: lightpath segments chaining source to destination
/// plus the compute units placed at each node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mapping {
    pub segments: Vec<SegmentAllocation>,
    pub placements: Vec<ComputePlacement>,
}

impl Mapping {
    pub fn compute_total(&self) -> u32 {
        self.placements.iter().map(|p| p.units).sum()
    }

    /// Slot-link product summed over segments.
    pub fn slot_links(&self) -> usize {
        self.segments.iter().map(|s| s.slots.len * s.path.links.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockReason {
    NoPath,
    ReachExceeded,
    NoSpectrum,
    NoCompute,
}

impl BlockReason {
    pub const ALL: [BlockReason; 4] =
        [BlockReason::NoPath, BlockReason::ReachExceeded, BlockReason::NoSpectrum, BlockReason::NoCompute];

    pub fn as_str(&self) -> &'static str {
        match self {
            BlockReason::NoPath => "no_path",
            BlockReason::ReachExceeded => "reach_exceeded",
            BlockReason::NoSpectrum => "no_spectrum",
            BlockReason::NoCompute => "no_compute",
        }
    }
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MappingResult {
    Accepted(Mapping),
    Blocked(BlockReason),
}

impl MappingResult {
    pub fn is_accepted(&self) -> bool {
        matches!(self, MappingResult::Accepted(_))
    }

    pub fn mapping(&self) -> Option<&Mapping> {
        match self {
            MappingResult::Accepted(m) => Some(m),
            MappingResult::Blocked(_) => None,
        }
    }
}

/// Substrate plus live resource state. One instance per simulation run.
#[derive(Debug, Clone)]
pub struct Topology {
    graph: Arc<Graph>,
    grids: Vec<CoreGrid>,
    compute: Vec<Option<ComputeNode>>,
    active: HashMap<RequestId, Mapping>,
    occupied_slots: usize,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.graph, &other.graph)
            && self.grids == other.grids
            && self.compute == other.compute
            && self.active == other.active
            && self.occupied_slots == other.occupied_slots
    }
}

impl Topology {
    /// Fresh state over `graph` with the given compute-capable nodes.
    pub fn new(graph: Arc<Graph>, compute: &BTreeMap<NodeId, u32>) -> Result<Self, ResourceError> {
        if compute.is_empty() {
            return Err(ResourceError::InvalidTopology("at least one compute-capable node is required".into()));
        }
        let mut nodes = vec![None; graph.node_count()];
        for (&node, &capacity) in compute {
            if node.0 >= nodes.len() {
                return Err(ResourceError::InvalidTopology(format!("compute node {node} does not exist")));
            }
            nodes[node.0] = Some(ComputeNode { capacity, committed: 0 });
        }
        let grids = vec![CoreGrid::new(graph.slots_per_core()); graph.links().len() * graph.cores_per_link()];
        Ok(Topology { graph, grids, compute: nodes, active: HashMap::new(), occupied_slots: 0 })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn grid(&self, link: LinkId, core: usize) -> &CoreGrid {
        &self.grids[link.0 * self.graph.cores_per_link() + core]
    }

    fn grid_mut(&mut self, link: LinkId, core: usize) -> &mut CoreGrid {
        let cores = self.graph.cores_per_link();
        &mut self.grids[link.0 * cores + core]
    }

    pub fn is_compute_capable(&self, node: NodeId) -> bool {
        self.compute.get(node.0).is_some_and(|c| c.is_some())
    }

    pub fn compute_node(&self, node: NodeId) -> Option<ComputeNode> {
        self.compute.get(node.0).copied().flatten()
    }

    /// Compute-capable nodes in ascending id order.
    pub fn compute_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.compute.iter().enumerate().filter(|(_, c)| c.is_some()).map(|(i, _)| NodeId(i))
    }

    pub fn residual_compute(&self, node: NodeId) -> Result<u32, ResourceError> {
        self.compute_node(node).map(|c| c.residual()).ok_or(ResourceError::NotComputeCapable(node))
    }

    /// Residual compute, or 0 for nodes without compute.
    pub fn residual_or_zero(&self, node: NodeId) -> u32 {
        self.compute_node(node).map_or(0, |c| c.residual())
    }

    pub fn occupied_slots(&self) -> usize {
        self.occupied_slots
    }

    pub fn active_requests(&self) -> usize {
        self.active.len()
    }

    pub fn active_mapping(&self, id: RequestId) -> Option<&Mapping> {
        self.active.get(&id)
    }

    pub fn is_active(&self, id: RequestId) -> bool {
        self.active.contains_key(&id)
    }

    /// Commits `mapping` for `request`. Validates every slot and compute
    /// placement first; on error nothing is mutated.
    pub fn reserve(&mut self, request: &SliceRequest, mapping: &Mapping) -> Result<(), ResourceError> {
        if self.active.contains_key(&request.id) {
            return Err(ResourceError::DuplicateRequest(request.id));
        }
        let cores = self.graph.cores_per_link();
        let slots = self.graph.slots_per_core();
        let mut claimed: Vec<(LinkId, usize, SlotBlock)> = Vec::new();
        for seg in &mapping.segments {
            if seg.core >= cores || seg.slots.len == 0 || seg.slots.end() > slots {
                return Err(ResourceError::InvalidMapping(format!(
                    "segment {}->{} uses core {} block {:?} outside the grid",
                    seg.endpoints.0, seg.endpoints.1, seg.core, seg.slots
                )));
            }
            for &link in &seg.path.links {
                if link.0 >= self.graph.links().len() {
                    return Err(ResourceError::InvalidMapping(format!("unknown link {link}")));
                }
                let grid = self.grid(link, seg.core);
                let inner_clash = claimed.iter().any(|&(l, c, b)| l == link && c == seg.core && b.overlaps(&seg.slots));
                if inner_clash || !grid.block_is_free(seg.slots) {
                    let slot = seg.slots.range().find(|&s| !grid.is_free(s)).unwrap_or(seg.slots.start);
                    return Err(ResourceError::SlotConflict { link, core: seg.core, slot });
                }
                claimed.push((link, seg.core, seg.slots));
            }
        }
        let mut demand: BTreeMap<NodeId, u32> = BTreeMap::new();
        for p in &mapping.placements {
            *demand.entry(p.node).or_default() += p.units;
        }
        for (&node, &units) in &demand {
            let residual = self.residual_compute(node)?;
            if units > residual {
                return Err(ResourceError::ComputeOverflow { node, requested: units, residual });
            }
        }

        for (link, core, block) in claimed {
            self.grid_mut(link, core).occupy(block, request.id);
            self.occupied_slots += block.len;
        }
        for (node, units) in demand {
            if let Some(c) = self.compute[node.0].as_mut() {
                c.committed += units;
            }
        }
        self.active.insert(request.id, mapping.clone());
        Ok(())
    }

    /// Frees everything held by `id`. Releasing twice is an error.
    pub fn release(&mut self, id: RequestId) -> Result<Mapping, ResourceError> {
        let mapping = self.active.remove(&id).ok_or(ResourceError::UnknownRequest(id))?;
        for seg in &mapping.segments {
            for &link in &seg.path.links {
                self.grid_mut(link, seg.core).vacate(seg.slots, id);
                self.occupied_slots -= seg.slots.len;
            }
        }
        for p in &mapping.placements {
            if let Some(c) = self.compute[p.node.0].as_mut() {
                c.committed -= p.units;
            }
        }
        Ok(mapping)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{line_graph, two_node};

    fn segment_on(topo: &Topology, core: usize, block: SlotBlock) -> SegmentAllocation {
        let path = topo.graph().k_shortest_paths(NodeId(0), NodeId(1), 1).unwrap()[0].clone();
        SegmentAllocation { endpoints: (NodeId(0), NodeId(1)), path, modulation: Modulation::Qam16, core, slots: block }
    }

    #[test]
    fn reserve_marks_owner() {
        let mut topo = two_node(400.0, 4000);
        let req = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let m = Mapping { segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4))], placements: vec![] };
        topo.reserve(&req, &m).unwrap();
        let grid = topo.grid(LinkId(0), 0);
        for s in 0..4 {
            assert_eq!(grid.owner(s), Some(RequestId(1)));
        }
        assert!(grid.is_free(4));
        assert_eq!(topo.occupied_slots(), 4);
    }

    #[test]
    fn reserve_release_restores_snapshot() {
        let mut topo = two_node(400.0, 4000);
        let pristine = topo.clone();
        let req = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let m = Mapping {
            segments: vec![segment_on(&topo, 3, SlotBlock::new(10, 4))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 5 }],
        };
        topo.reserve(&req, &m).unwrap();
        assert_ne!(topo, pristine);
        topo.release(req.id).unwrap();
        assert_eq!(topo, pristine);
    }

    #[test]
    fn adjacent_blocks_have_distinct_owners() {
        let mut topo = two_node(400.0, 4000);
        let a = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let b = SliceRequest::new(2, NodeId(0), NodeId(1), 4, 5);
        let ma = Mapping { segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4))], placements: vec![] };
        let mb = Mapping { segments: vec![segment_on(&topo, 0, SlotBlock::new(4, 4))], placements: vec![] };
        topo.reserve(&a, &ma).unwrap();
        topo.reserve(&b, &mb).unwrap();
        let grid = topo.grid(LinkId(0), 0);
        assert_eq!(grid.owner(3), Some(RequestId(1)));
        assert_eq!(grid.owner(4), Some(RequestId(2)));
    }

    #[test]
    fn conflicting_reserve_is_atomic() {
        let mut topo = two_node(400.0, 10);
        let a = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let ma = Mapping { segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4))], placements: vec![] };
        topo.reserve(&a, &ma).unwrap();
        let before = topo.clone();

        let b = SliceRequest::new(2, NodeId(0), NodeId(1), 4, 5);
        let mb = Mapping {
            segments: vec![segment_on(&topo, 1, SlotBlock::new(0, 4)), segment_on(&topo, 0, SlotBlock::new(3, 2))],
            placements: vec![],
        };
        assert!(matches!(topo.reserve(&b, &mb), Err(ResourceError::SlotConflict { slot: 3, .. })));
        assert_eq!(topo, before);

        let over = Mapping {
            segments: vec![segment_on(&topo, 1, SlotBlock::new(0, 4))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 11 }],
        };
        assert!(matches!(topo.reserve(&b, &over), Err(ResourceError::ComputeOverflow { residual: 10, .. })));
        assert_eq!(topo, before);
    }

    #[test]
    fn self_overlapping_mapping_is_rejected() {
        let mut topo = two_node(400.0, 10);
        let a = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let m = Mapping {
            segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4)), segment_on(&topo, 0, SlotBlock::new(2, 4))],
            placements: vec![],
        };
        assert!(matches!(topo.reserve(&a, &m), Err(ResourceError::SlotConflict { .. })));
        assert_eq!(topo.occupied_slots(), 0);
    }

    #[test]
    fn release_unknown_and_double_release() {
        let mut topo = two_node(400.0, 4000);
        assert!(matches!(topo.release(RequestId(9)), Err(ResourceError::UnknownRequest(RequestId(9)))));
        let req = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let m = Mapping { segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4))], placements: vec![] };
        topo.reserve(&req, &m).unwrap();
        topo.release(req.id).unwrap();
        assert_eq!(topo.occupied_slots(), 0);
        assert!(topo.release(req.id).is_err());
    }

    #[test]
    fn residual_compute_tracks_placements() {
        let mut topo = two_node(400.0, 400);
        assert_eq!(topo.residual_compute(NodeId(1)).unwrap(), 400);
        assert!(matches!(topo.residual_compute(NodeId(0)), Err(ResourceError::NotComputeCapable(NodeId(0)))));
        let req = SliceRequest::new(1, NodeId(0), NodeId(1), 4, 5);
        let m = Mapping {
            segments: vec![segment_on(&topo, 0, SlotBlock::new(0, 4))],
            placements: vec![ComputePlacement { node: NodeId(1), units: 5 }],
        };
        topo.reserve(&req, &m).unwrap();
        assert_eq!(topo.residual_compute(NodeId(1)).unwrap(), 395);

        let fresh = two_node(400.0, 4000);
        assert_eq!(fresh.residual_compute(NodeId(1)).unwrap(), 4000);
    }

    #[test]
    fn graph_rejects_bad_inputs() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let groups = CoreGroups::default_for(1);
        let table = ModulationTable::standard();
        let disconnected = Graph::new(names.clone(), vec![(NodeId(0), NodeId(1), 10.0)], 1, 8, groups.clone(), table.clone());
        assert!(disconnected.is_err());
        let negative = Graph::new(
            names,
            vec![(NodeId(0), NodeId(1), 10.0), (NodeId(1), NodeId(2), -1.0)],
            1,
            8,
            groups,
            table,
        );
        assert!(negative.is_err());
        let graph = line_graph(&[100.0, 200.0], 1, 8);
        assert!(Topology::new(graph, &BTreeMap::new()).is_err());
    }

    #[test]
    fn seven_core_groups_are_valid_partition() {
        let groups = CoreGroups::seven_core();
        assert!(partition_problems(groups.groups(), 7).is_empty());
        assert_eq!(groups.group_of(6), Some(2));
        let missing = CoreGroups::from_one_based(&[vec![1, 3, 5], vec![2, 4, 6]], 7).unwrap_err();
        assert!(missing.contains("core 7 is not covered"), "{missing}");
        let adjacent = CoreGroups::from_one_based(&[vec![1, 2], vec![3, 5], vec![4, 6], vec![7]], 7).unwrap_err();
        assert!(adjacent.contains("adjacent cores 1 and 2"), "{adjacent}");
    }
}
