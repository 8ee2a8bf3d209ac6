//! Constrained shortest paths over the edge-expanded (line) graph:
//! states are directed edges, transitions respect the validity mask, so
//! turn restrictions are honored exactly. A brute-force enumerator over
//! edge-distinct walks serves as the independent reference.

use std::collections::{BTreeMap, VecDeque};

use crate::error::Result;
use crate::graph::{EdgeKey, NavGraph, NodeId};
use crate::rules::ConstraintSet;

/// Shortest rule-compliant path from `start` (arriving via `in_edge`,
/// when given) to `target`, as a node sequence including both endpoints.
/// Returns `None` iff no compliant path exists. Length is hop count.
///
/// BFS over directed-edge states: a shortest compliant walk never
/// repeats a directed edge, so edge states suffice for optimality even
/// when a compliant walk must revisit a node.
pub fn compliant_shortest_path(
    graph: &NavGraph,
    constraints: &ConstraintSet,
    start: &NodeId,
    in_edge: Option<&EdgeKey>,
    target: &NodeId,
) -> Result<Option<Vec<NodeId>>> {
    graph.node(start)?;
    graph.node(target)?;
    if start == target {
        return Ok(Some(vec![start.clone()]));
    }
    let mut parent: BTreeMap<EdgeKey, Option<EdgeKey>> = BTreeMap::new();
    let mut queue: VecDeque<EdgeKey> = VecDeque::new();
    for edge in graph.outgoing(start)? {
        let key = edge.key();
        if constraints.mask(in_edge, &key) && !parent.contains_key(&key) {
            parent.insert(key.clone(), None);
            queue.push_back(key);
        }
    }
    while let Some(state) = queue.pop_front() {
        if state.to == *target {
            let mut nodes = vec![state.to.clone()];
            let mut cursor = Some(state);
            while let Some(edge) = cursor {
                nodes.push(edge.from.clone());
                cursor = parent[&edge].clone();
            }
            nodes.reverse();
            // Containment self-check: every returned transition must
            // survive the mask.
            debug_assert!(
                first_violation(constraints, &nodes, in_edge).is_none(),
                "oracle produced a non-compliant path"
            );
            return Ok(Some(nodes));
        }
        for edge in graph.outgoing(&state.to)? {
            let key = edge.key();
            if constraints.mask(Some(&state), &key) && !parent.contains_key(&key) {
                parent.insert(key.clone(), Some(state.clone()));
                queue.push_back(key);
            }
        }
    }
    Ok(None)
}

/// Reference: exhaustive search over compliant walks that never repeat a
/// directed edge, returning the minimal hop count. Exponential; for
/// small verification instances only.
pub fn brute_force_compliant_len(
    graph: &NavGraph,
    constraints: &ConstraintSet,
    start: &NodeId,
    in_edge: Option<&EdgeKey>,
    target: &NodeId,
) -> Result<Option<usize>> {
    graph.node(start)?;
    graph.node(target)?;
    if start == target {
        return Ok(Some(0));
    }
    let mut best: Option<usize> = None;
    let mut used: std::collections::BTreeSet<EdgeKey> = Default::default();
    fn recurse(
        graph: &NavGraph,
        constraints: &ConstraintSet,
        at: &NodeId,
        arrival: Option<&EdgeKey>,
        target: &NodeId,
        depth: usize,
        used: &mut std::collections::BTreeSet<EdgeKey>,
        best: &mut Option<usize>,
    ) {
        if at == target {
            if best.map_or(true, |b| depth < b) {
                *best = Some(depth);
            }
            return;
        }
        if let Some(b) = *best {
            if depth + 1 >= b {
                return;
            }
        }
        for edge in graph.outgoing(at).expect("known node") {
            let key = edge.key();
            if used.contains(&key) || !constraints.mask(arrival, &key) {
                continue;
            }
            used.insert(key.clone());
            recurse(graph, constraints, &edge.to, Some(&key), target, depth + 1, used, best);
            used.remove(&key);
        }
    }
    recurse(graph, constraints, start, in_edge, target, 0, &mut used, &mut best);
    Ok(best)
}

/// Assert a path satisfies the mask on every transition (the pruned-graph
/// containment property). Returns the violating transition if any.
pub fn first_violation(
    constraints: &ConstraintSet,
    path: &[NodeId],
    start_in_edge: Option<&EdgeKey>,
) -> Option<(Option<EdgeKey>, EdgeKey)> {
    let mut arrival: Option<EdgeKey> = start_in_edge.cloned();
    for pair in path.windows(2) {
        let key = EdgeKey { from: pair[0].clone(), to: pair[1].clone() };
        if !constraints.mask(arrival.as_ref(), &key) {
            return Some((arrival, key));
        }
        arrival = Some(key);
    }
    None
}
