//! Small hand-built substrates used by unit tests, integration tests, and the
//! CLI's examples.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::model::{CoreGroups, Graph, LinkId, Mapping, NodeId, SegmentAllocation, SliceRequest, SlotBlock, Topology};
use crate::routing::Path;
use crate::spectrum::{Modulation, ModulationTable};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| ((b'A' + (i % 26) as u8) as char).to_string() + &"'".repeat(i / 26)).collect()
}

/// Graph over nodes `A, B, C, ...` with the standard modulation table and
/// default core groups.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize, f64)], cores: usize, slots: usize) -> Arc<Graph> {
    let edges = edges.iter().map(|&(a, b, d)| (NodeId(a), NodeId(b), d)).collect();
    Arc::new(
        Graph::new(names(n), edges, cores, slots, CoreGroups::default_for(cores), ModulationTable::standard())
            .expect("fixture graph is valid"),
    )
}

/// A-B 1 km, B-C 1 km, A-C 3 km.
pub fn triangle() -> Arc<Graph> {
    graph_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)], 1, 8)
}

/// Chain of nodes with the given link distances.
pub fn line_graph(distances: &[f64], cores: usize, slots: usize) -> Arc<Graph> {
    let edges: Vec<_> = distances.iter().enumerate().map(|(i, &d)| (i, i + 1, d)).collect();
    graph_from_edges(distances.len() + 1, &edges, cores, slots)
}

/// Chain topology. An empty `compute` list makes the last node
/// compute-capable with 4000 units.
pub fn line_topology(distances: &[f64], cores: usize, slots: usize, compute: &[(usize, u32)]) -> Topology {
    let graph = line_graph(distances, cores, slots);
    let last = distances.len();
    let compute: BTreeMap<NodeId, u32> = if compute.is_empty() {
        [(NodeId(last), 4000)].into()
    } else {
        compute.iter().map(|&(n, c)| (NodeId(n), c)).collect()
    };
    Topology::new(graph, &compute).expect("fixture topology is valid")
}

/// Two nodes, one 7-core x 120-slot link; node B is compute-capable.
pub fn two_node(distance_km: f64, capacity: u32) -> Topology {
    line_topology(&[distance_km], 7, 120, &[(1, capacity)])
}

/// Occupies `block` on one core of one link under request id `owner`.
pub fn fill(topology: &mut Topology, link: LinkId, core: usize, block: SlotBlock, owner: u64) {
    let (a, b) = topology.graph().link(link).endpoints;
    let path = Path::from_links(topology.graph(), a, &[link]).unwrap();
    let request = SliceRequest::new(owner, a, b, 1, 1);
    let mapping = Mapping {
        segments: vec![SegmentAllocation { endpoints: (a, b), path, modulation: Modulation::Qam16, core, slots: block }],
        placements: Vec::new(),
    };
    topology.reserve(&request, &mapping).expect("fixture fill must not conflict");
}
