//! The navigation environment: nodes with planar positions, directed
//! geometric edges with derived headings, panoramic slice geometry, and
//! synthetic generators plus JSON file I/O.
//!
//! Graphs are bidirectional at the geometric level — every directed edge
//! has its reverse — and immutable once built and (optionally) injected
//! with sign placements, so episode runners can share them freely across
//! threads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bearing, normalize_heading, Vec2};
use crate::rules::SignPlacement;

/// Default number of panoramic slices.
pub const DEFAULT_SLICE_COUNT: usize = 8;

/// Identifier of a navigable node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Key of a directed edge, usable in ordered sets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub from: NodeId,
    pub to: NodeId,
}

impl EdgeKey {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>) -> Self {
        EdgeKey { from: from.into(), to: to.into() }
    }

    /// Key of the geometric reverse edge.
    pub fn reversed(&self) -> EdgeKey {
        EdgeKey { from: self.to.clone(), to: self.from.clone() }
    }
}

impl From<(&str, &str)> for EdgeKey {
    fn from((a, b): (&str, &str)) -> Self {
        EdgeKey::new(a, b)
    }
}

impl std::fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// A navigable node.
#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub position: Vec2,
    /// Sign placements at this node; empty until benchmark injection.
    pub signs: Vec<SignPlacement>,
}

/// A directed geometric edge. Heading is always derived from the
/// endpoint positions, never stored in files.
#[derive(Clone, Debug)]
pub struct DirectedEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// Compass bearing from `from` to `to`, in `[0, 2π)`.
    pub heading: f64,
    /// Traversal length in abstract units; may differ from the Euclidean
    /// gap when generators jitter it.
    pub length: f64,
}

impl DirectedEdge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey { from: self.from.clone(), to: self.to.clone() }
    }
}

/// A sign as it appears inside a panoramic slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibleSign {
    pub rule: crate::rules::RuleId,
    pub legibility: f64,
}

/// One of the K panoramic slices of an observation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceView {
    pub index: usize,
    /// Destination nodes of the outgoing edges projected into this slice.
    pub visible_edges: Vec<NodeId>,
    pub visible_signs: Vec<VisibleSign>,
}

/// A panoramic observation at a node: K heading-relative slices, slice 0
/// straight ahead.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observation {
    pub node: NodeId,
    pub agent_heading: f64,
    pub slices: Vec<SliceView>,
}

impl Observation {
    pub fn slice(&self, index: usize) -> &SliceView {
        &self.slices[index]
    }
}

/// The navigation substrate: nodes, directed edges, and slice geometry.
#[derive(Clone, Debug)]
pub struct NavGraph {
    slice_count: usize,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, DirectedEdge>,
    outgoing: BTreeMap<NodeId, Vec<EdgeKey>>,
    mean_edge_length: f64,
}

impl NavGraph {
    /// Build a graph from nodes and directed edges, validating every
    /// structural invariant (existing endpoints, reverse edges, positive
    /// lengths, connectivity).
    pub fn from_directed(
        slice_count: usize,
        nodes: Vec<(NodeId, Vec2)>,
        edges: Vec<(NodeId, NodeId, f64)>,
    ) -> Result<NavGraph> {
        if slice_count == 0 {
            return Err(Error::Validation("slice_count must be positive".into()));
        }
        let mut node_map = BTreeMap::new();
        for (id, position) in nodes {
            if !position.is_finite() {
                return Err(Error::Invariant(format!("node `{id}` has a non-finite position")));
            }
            if node_map
                .insert(id.clone(), Node { id: id.clone(), position, signs: Vec::new() })
                .is_some()
            {
                return Err(Error::Invariant(format!("duplicate node id `{id}`")));
            }
        }
        let mut edge_map: BTreeMap<EdgeKey, DirectedEdge> = BTreeMap::new();
        for (from, to, length) in edges {
            if from == to {
                return Err(Error::Invariant(format!("self-loop at `{from}`")));
            }
            if length <= 0.0 || !length.is_finite() {
                return Err(Error::Invariant(format!(
                    "edge {from}->{to} has non-positive length {length}"
                )));
            }
            let (pf, pt) = match (node_map.get(&from), node_map.get(&to)) {
                (Some(a), Some(b)) => (a.position, b.position),
                _ => {
                    return Err(Error::Invariant(format!(
                        "edge {from}->{to} references a missing node"
                    )))
                }
            };
            let key = EdgeKey { from: from.clone(), to: to.clone() };
            let edge = DirectedEdge { from, to, heading: bearing(pf, pt), length };
            if edge_map.insert(key.clone(), edge).is_some() {
                return Err(Error::Invariant(format!("duplicate edge {key}")));
            }
        }
        for key in edge_map.keys() {
            if !edge_map.contains_key(&key.reversed()) {
                return Err(Error::Invariant(format!("edge {key} lacks its reverse")));
            }
        }

        let mut outgoing: BTreeMap<NodeId, Vec<EdgeKey>> =
            node_map.keys().map(|id| (id.clone(), Vec::new())).collect();
        for key in edge_map.keys() {
            outgoing.get_mut(&key.from).expect("endpoint checked").push(key.clone());
        }

        let mean_edge_length = if edge_map.is_empty() {
            1.0
        } else {
            edge_map.values().map(|e| e.length).sum::<f64>() / edge_map.len() as f64
        };

        let graph = NavGraph { slice_count, nodes: node_map, edges: edge_map, outgoing, mean_edge_length };
        graph.check_connected()?;
        Ok(graph)
    }

    /// Build from undirected edges; each is expanded to both directions
    /// with the same length.
    pub fn from_undirected(
        slice_count: usize,
        nodes: Vec<(NodeId, Vec2)>,
        edges: Vec<(NodeId, NodeId, f64)>,
    ) -> Result<NavGraph> {
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for (a, b, len) in edges {
            directed.push((a.clone(), b.clone(), len));
            directed.push((b, a, len));
        }
        NavGraph::from_directed(slice_count, nodes, directed)
    }

    fn check_connected(&self) -> Result<()> {
        let Some(start) = self.nodes.keys().next() else {
            return Err(Error::Invariant("graph has no nodes".into()));
        };
        let reached = self.hop_distances(start)?;
        if reached.len() != self.nodes.len() {
            let missing = self
                .nodes
                .keys()
                .find(|id| !reached.contains_key(*id))
                .expect("some node unreached");
            return Err(Error::Invariant(format!(
                "graph is not connected: `{missing}` unreachable from `{start}`"
            )));
        }
        Ok(())
    }

    pub fn slice_count(&self) -> usize {
        self.slice_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn mean_edge_length(&self) -> f64 {
        self.mean_edge_length
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edge(&self, key: &EdgeKey) -> Result<&DirectedEdge> {
        self.edges
            .get(key)
            .ok_or_else(|| Error::MissingEdge { from: key.from.clone(), to: key.to.clone() })
    }

    pub fn has_edge(&self, key: &EdgeKey) -> bool {
        self.edges.contains_key(key)
    }

    /// Node ids in deterministic (sorted) order.
    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &DirectedEdge> {
        self.edges.values()
    }

    /// Outgoing edges of a node in deterministic order.
    pub fn outgoing(&self, id: &NodeId) -> Result<impl Iterator<Item = &DirectedEdge>> {
        let keys = self.outgoing.get(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
        Ok(keys.iter().map(move |k| &self.edges[k]))
    }

    pub fn out_degree(&self, id: &NodeId) -> usize {
        self.outgoing.get(id).map_or(0, Vec::len)
    }

    /// Whether two distinct nodes share an edge.
    pub fn adjacent(&self, a: &NodeId, b: &NodeId) -> bool {
        self.edges.contains_key(&EdgeKey { from: a.clone(), to: b.clone() })
    }

    /// Attach sign placements to their nodes. Call once, before episode
    /// runs; placements must reference existing nodes.
    pub fn inject_placements(&mut self, placements: &[SignPlacement]) -> Result<()> {
        for p in placements {
            if !(0.0..=1.0).contains(&p.legibility) {
                return Err(Error::Validation(format!(
                    "placement at `{}` has legibility {} outside [0, 1]",
                    p.node, p.legibility
                )));
            }
            let node = self
                .nodes
                .get_mut(&p.node)
                .ok_or_else(|| Error::UnknownNode(p.node.clone()))?;
            node.signs.push(p.clone());
        }
        Ok(())
    }

    /// Slice index of the edge `(at, toward)` as seen under `agent_heading`:
    /// `floor(((edge.heading - agent_heading) mod 2π) / (2π/K))`.
    pub fn project_slice(&self, at: &NodeId, toward: &NodeId, agent_heading: f64) -> Result<usize> {
        let edge = self.edge(&EdgeKey { from: at.clone(), to: toward.clone() })?;
        Ok(self.slice_of_heading(edge.heading, agent_heading))
    }

    /// Slice index of an absolute heading relative to the agent heading.
    pub fn slice_of_heading(&self, heading: f64, agent_heading: f64) -> usize {
        let rel = normalize_heading(heading - agent_heading);
        let width = TAU / self.slice_count as f64;
        let idx = (rel / width).floor() as usize;
        idx.min(self.slice_count - 1)
    }

    /// Panoramic observation at a node. Every outgoing edge appears in
    /// exactly one slice; a sign appears in the slice of its facing
    /// heading, or every slice for facing `All`.
    pub fn observe(&self, at: &NodeId, agent_heading: f64) -> Result<Observation> {
        let node = self.node(at)?;
        let mut slices: Vec<SliceView> = (0..self.slice_count)
            .map(|index| SliceView { index, visible_edges: Vec::new(), visible_signs: Vec::new() })
            .collect();
        for edge in self.outgoing(at)? {
            let idx = self.slice_of_heading(edge.heading, agent_heading);
            slices[idx].visible_edges.push(edge.to.clone());
        }
        for placement in &node.signs {
            let sign = VisibleSign { rule: placement.rule.clone(), legibility: placement.legibility };
            match placement.facing {
                crate::rules::Facing::All => {
                    for slice in &mut slices {
                        slice.visible_signs.push(sign.clone());
                    }
                }
                crate::rules::Facing::Heading(h) => {
                    let idx = self.slice_of_heading(h, agent_heading);
                    slices[idx].visible_signs.push(sign);
                }
            }
        }
        Ok(Observation { node: at.clone(), agent_heading, slices })
    }

    /// Hop distances from `from` to every reachable node (BFS).
    pub fn hop_distances(&self, from: &NodeId) -> Result<BTreeMap<NodeId, usize>> {
        self.hop_distances_filtered(from, None)
    }

    /// Hop distances ignoring one removed node entirely.
    pub fn hop_distances_excluding(
        &self,
        from: &NodeId,
        removed: &NodeId,
    ) -> Result<BTreeMap<NodeId, usize>> {
        self.hop_distances_filtered(from, Some(removed))
    }

    fn hop_distances_filtered(
        &self,
        from: &NodeId,
        removed: Option<&NodeId>,
    ) -> Result<BTreeMap<NodeId, usize>> {
        if !self.nodes.contains_key(from) {
            return Err(Error::UnknownNode(from.clone()));
        }
        if removed == Some(from) {
            return Ok(BTreeMap::new());
        }
        let mut dist = BTreeMap::new();
        dist.insert(from.clone(), 0usize);
        let mut queue = VecDeque::new();
        queue.push_back(from.clone());
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for key in &self.outgoing[&v] {
                if removed.map_or(false, |r| r == &key.to) {
                    continue;
                }
                if !dist.contains_key(&key.to) {
                    dist.insert(key.to.clone(), d + 1);
                    queue.push_back(key.to.clone());
                }
            }
        }
        Ok(dist)
    }

    /// Nodes within `radius` hops of any node in `seeds` (including the
    /// seeds themselves).
    pub fn neighborhood(&self, seeds: impl IntoIterator<Item = NodeId>, radius: usize) -> BTreeSet<NodeId> {
        let mut frontier: Vec<NodeId> = seeds.into_iter().filter(|n| self.contains_node(n)).collect();
        let mut seen: BTreeSet<NodeId> = frontier.iter().cloned().collect();
        for _ in 0..radius {
            let mut next = Vec::new();
            for v in frontier {
                for key in &self.outgoing[&v] {
                    if seen.insert(key.to.clone()) {
                        next.push(key.to.clone());
                    }
                }
            }
            frontier = next;
        }
        seen
    }
}

/// Generate a `rows x cols` 4-connected lattice with bidirectional edges
/// of uniform `edge_length`. Node `r{r}c{c}` sits at `(c, r) * edge_length`.
/// The seed is reserved for optional edge-length jitter; the plain
/// generator ignores it, so equal arguments give byte-identical graphs.
pub fn generate_grid(rows: usize, cols: usize, edge_length: f64, seed: u64) -> Result<NavGraph> {
    generate_grid_jittered(rows, cols, edge_length, 0.0, seed)
}

/// Grid generator with relative edge-length jitter in `[0, 1)`; both
/// directions of an undirected pair share the jittered length.
pub fn generate_grid_jittered(
    rows: usize,
    cols: usize,
    edge_length: f64,
    jitter: f64,
    seed: u64,
) -> Result<NavGraph> {
    use rand::Rng;
    if rows < 2 || cols < 2 {
        return Err(Error::Dimension(format!("grid needs rows, cols >= 2, got {rows}x{cols}")));
    }
    if edge_length <= 0.0 {
        return Err(Error::Dimension(format!("edge_length must be positive, got {edge_length}")));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::Dimension(format!("jitter must lie in [0, 1), got {jitter}")));
    }
    let node_id = |r: usize, c: usize| NodeId::new(format!("r{r}c{c}"));
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push((node_id(r, c), Vec2::new(c as f64 * edge_length, r as f64 * edge_length)));
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut push = |a: NodeId, b: NodeId, rng: &mut rand_chacha::ChaCha8Rng| {
        let len = if jitter > 0.0 {
            edge_length * (1.0 + rng.random_range(-jitter..jitter))
        } else {
            edge_length
        };
        edges.push((a, b, len));
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push(node_id(r, c), node_id(r, c + 1), &mut rng);
            }
            if r + 1 < rows {
                push(node_id(r, c), node_id(r + 1, c), &mut rng);
            }
        }
    }
    NavGraph::from_undirected(DEFAULT_SLICE_COUNT, nodes, edges)
}

use rand::SeedableRng;

/// Generate a random connected graph: a chain over a shuffled node order
/// plus `extra_edges` random undirected chords. Nodes sit on a circle so
/// positions are distinct and headings well defined. Used by the
/// verification suites that exercise arbitrary topologies.
pub fn generate_random_connected(n: usize, extra_edges: usize, seed: u64) -> Result<NavGraph> {
    use rand::seq::SliceRandom;
    use rand::Rng;
    if n < 2 {
        return Err(Error::Dimension(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("v{i:02}"))).collect();
    let radius = n as f64;
    let nodes: Vec<(NodeId, Vec2)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let angle = TAU * i as f64 / n as f64;
            (id.clone(), Vec2::new(radius * angle.cos(), radius * angle.sin()))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for w in order.windows(2) {
        pairs.insert((w[0].min(w[1]), w[0].max(w[1])));
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < extra_edges && attempts < extra_edges * 20 + 20 {
        attempts += 1;
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && pairs.insert((a.min(b), a.max(b))) {
            added += 1;
        }
    }
    let edges: Vec<(NodeId, NodeId, f64)> = pairs
        .into_iter()
        .map(|(a, b)| {
            let len = nodes[a].1.dist(nodes[b].1).max(1e-6);
            (ids[a].clone(), ids[b].clone(), len)
        })
        .collect();
    NavGraph::from_undirected(DEFAULT_SLICE_COUNT, nodes, edges)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    #[serde(default = "default_slice_count")]
    slice_count: usize,
    nodes: Vec<GraphFileNode>,
    edges: Vec<GraphFileEdge>,
}

fn default_slice_count() -> usize {
    DEFAULT_SLICE_COUNT
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFileNode {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFileEdge {
    from: String,
    to: String,
    length: f64,
}

/// Load a graph file, validating every invariant. Sign placements live
/// in constraint files, not here.
pub fn load_graph(path: impl AsRef<Path>) -> Result<NavGraph> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let file: GraphFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| (NodeId::new(n.id), Vec2::new(n.x, n.y)))
        .collect();
    let edges = file
        .edges
        .into_iter()
        .map(|e| (NodeId::new(e.from), NodeId::new(e.to), e.length))
        .collect();
    NavGraph::from_directed(file.slice_count, nodes, edges)
}

/// Save a graph file; `save` then `load` yields an equal graph.
pub fn save_graph(graph: &NavGraph, path: impl AsRef<Path>) -> Result<()> {
    let file = GraphFile {
        slice_count: graph.slice_count,
        nodes: graph
            .nodes
            .values()
            .map(|n| GraphFileNode { id: n.id.0.clone(), x: n.position.x, y: n.position.y })
            .collect(),
        edges: graph
            .edges
            .values()
            .map(|e| GraphFileEdge { from: e.from.0.clone(), to: e.to.0.clone(), length: e.length })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}
