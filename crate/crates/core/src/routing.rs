//! K-shortest loopless paths by distance.
//!
//! Paths are totally ordered by (distance, hop count, node sequence), and
//! both the spur searches and the candidate heap use that same order, so the
//! top-k list is unique and a prefix of the top-(k+1) list.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::{Arc, OnceLock};

use crate::error::RoutingError;
use crate::model::{Graph, LinkId, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub distance_km: f64,
}

impl Path {
    /// The zero-length path sitting at `node`.
    pub fn trivial(node: NodeId) -> Self {
        Path { nodes: vec![node], links: Vec::new(), distance_km: 0.0 }
    }

    /// Builds a path from `start` along `links`, summing distances in order.
    pub fn from_links(graph: &Graph, start: NodeId, links: &[LinkId]) -> Option<Self> {
        let mut nodes = vec![start];
        let mut distance_km = 0.0;
        let mut at = start;
        for &l in links {
            let link = graph.link(l);
            at = link.other(at)?;
            nodes.push(at);
            distance_km += link.distance_km;
        }
        Some(Path { nodes, links: links.to_vec(), distance_km })
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("paths hold at least one node")
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    /// Sub-path between node positions `from..=to`.
    pub fn slice(&self, graph: &Graph, from: usize, to: usize) -> Path {
        Path::from_links(graph, self.nodes[from], &self.links[from..to]).expect("sub-path of a valid path")
    }

    /// Distance from the first node to the node at position `pos`.
    pub fn distance_to(&self, graph: &Graph, pos: usize) -> f64 {
        self.links[..pos].iter().fold(0.0, |acc, &l| acc + graph.link(l).distance_km)
    }

    /// Ordering used everywhere a path ranking is needed.
    pub fn rank_cmp(&self, other: &Path) -> Ordering {
        self.distance_km
            .total_cmp(&other.distance_km)
            .then(self.hops().cmp(&other.hops()))
            .then_with(|| self.nodes.cmp(&other.nodes))
    }

    pub fn describe(&self, graph: &Graph) -> String {
        let names: Vec<&str> = self.nodes.iter().map(|&n| graph.name(n)).collect();
        format!("{} ({:.0} km)", names.join("-"), self.distance_km)
    }
}

/// Search label: distance and hops from the search origin plus the node
/// sequence so far, compared in path rank order.
#[derive(Debug, Clone)]
struct Label {
    distance: f64,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Label {
    fn key_cmp(&self, other: &Label) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.links.len().cmp(&other.links.len()))
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Best path from `source` to `target` avoiding banned nodes and links.
///
/// Appending the same edge to two labels at one node preserves their order,
/// so settling labels in heap order yields the minimum under the full key.
fn restricted_shortest(
    graph: &Graph,
    source: NodeId,
    target: NodeId,
    banned_nodes: &[bool],
    banned_links: &[bool],
) -> Option<Label> {
    let mut best: Vec<Option<Label>> = vec![None; graph.node_count()];
    let mut heap = BinaryHeap::new();
    let start = Label { distance: 0.0, nodes: vec![source], links: Vec::new() };
    best[source.0] = Some(start.clone());
    heap.push(Reverse(start));
    while let Some(Reverse(label)) = heap.pop() {
        let at = *label.nodes.last().unwrap();
        if best[at.0].as_ref() != Some(&label) {
            continue;
        }
        if at == target {
            return Some(label);
        }
        for &(next, link) in graph.neighbors(at) {
            if banned_nodes[next.0] || banned_links[link.0] || label.nodes.contains(&next) {
                continue;
            }
            let mut cand = label.clone();
            cand.distance += graph.link(link).distance_km;
            cand.nodes.push(next);
            cand.links.push(link);
            if best[next.0].as_ref().is_none_or(|b| cand < *b) {
                best[next.0] = Some(cand.clone());
                heap.push(Reverse(cand));
            }
        }
    }
    None
}

/// Up to `k` loopless paths from `source` to `target` in rank order (Yen).
pub fn k_shortest_paths(graph: &Graph, source: NodeId, target: NodeId, k: usize) -> Result<Vec<Path>, RoutingError> {
    if k == 0 {
        return Err(RoutingError::ZeroK);
    }
    if source == target {
        return Err(RoutingError::SameEndpoints(source));
    }
    let n = graph.node_count();
    let m = graph.links().len();
    let first = restricted_shortest(graph, source, target, &vec![false; n], &vec![false; m])
        .ok_or(RoutingError::NoPath(source, target))?;
    let mut accepted = vec![Path::from_links(graph, source, &first.links).unwrap()];
    let mut candidates: Vec<Path> = Vec::new();

    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.links.len() {
            let spur = last.nodes[i];
            let root_nodes = &last.nodes[..=i];
            let mut banned_links = vec![false; m];
            for p in &accepted {
                if p.nodes.len() > i && p.nodes[..=i] == *root_nodes {
                    banned_links[p.links[i].0] = true;
                }
            }
            let mut banned_nodes = vec![false; n];
            for &v in &root_nodes[..i] {
                banned_nodes[v.0] = true;
            }
            if let Some(spur_path) = restricted_shortest(graph, spur, target, &banned_nodes, &banned_links) {
                let mut links = last.links[..i].to_vec();
                links.extend_from_slice(&spur_path.links);
                let cand = Path::from_links(graph, source, &links).unwrap();
                if !candidates.iter().any(|c| c.nodes == cand.nodes) && !accepted.iter().any(|a| a.nodes == cand.nodes)
                {
                    candidates.push(cand);
                }
            }
        }
        let Some(best) = candidates.iter().enumerate().min_by(|a, b| a.1.rank_cmp(b.1)).map(|(i, _)| i) else {
            break;
        };
        accepted.push(candidates.swap_remove(best));
    }
    Ok(accepted)
}

/// Lazily filled per-pair cache of the top `depth` paths.
#[derive(Debug)]
pub struct PathCache {
    depth: usize,
    nodes: usize,
    slots: Vec<OnceLock<Result<Arc<Vec<Path>>, RoutingError>>>,
}

impl PathCache {
    pub const DEFAULT_DEPTH: usize = 3;

    pub fn new(nodes: usize, depth: usize) -> Self {
        PathCache { depth, nodes, slots: (0..nodes * nodes).map(|_| OnceLock::new()).collect() }
    }
}

impl Graph {
    /// Cached [`k_shortest_paths`]. Requests deeper than the cache are
    /// computed on demand.
    pub fn k_shortest_paths(&self, source: NodeId, target: NodeId, k: usize) -> Result<Arc<Vec<Path>>, RoutingError> {
        let cache = self.path_cache();
        if k == 0 {
            return Err(RoutingError::ZeroK);
        }
        if k > cache.depth || source.0 >= cache.nodes || target.0 >= cache.nodes {
            return k_shortest_paths(self, source, target, k).map(Arc::new);
        }
        let all = cache.slots[source.0 * cache.nodes + target.0]
            .get_or_init(|| k_shortest_paths(self, source, target, cache.depth).map(Arc::new))
            .clone()?;
        if all.len() <= k {
            Ok(all)
        } else {
            Ok(Arc::new(all[..k].to_vec()))
        }
    }
}
