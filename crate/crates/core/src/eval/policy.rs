//! Base navigation policies: the blind route follower, the rule-blind
//! geometric shortest-path navigator, and the compliant oracle that
//! plans over the pruned graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::episode::Episode;
use crate::eval::oracle::compliant_shortest_path;
use crate::graph::{EdgeKey, NavGraph, NodeId};
use crate::planner::AgentState;
use crate::rules::ConstraintSet;

/// Selector for the built-in base policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RouteFollower,
    GeometricSp,
    CompliantOracle,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PolicyKind::RouteFollower => "route_follower",
            PolicyKind::GeometricSp => "geometric_sp",
            PolicyKind::CompliantOracle => "compliant_oracle",
        };
        f.write_str(s)
    }
}

/// A base policy instance, one per episode.
pub enum BasePolicy {
    RouteFollower(RouteFollower),
    GeometricSp(GeometricSp),
    CompliantOracle(OraclePolicy),
}

/// Blind gold-route follower: advances along the route, oblivious to
/// constraints; knocked off-route, it re-aims at the nearest not-yet-
/// reached route node by geometric shortest path.
pub fn policy_route_follower(episode: &Episode) -> BasePolicy {
    BasePolicy::RouteFollower(RouteFollower {
        route: episode.gold_route.clone(),
        reaim_cache: BTreeMap::new(),
    })
}

/// Rule-blind geometric navigator: walks a shortest path on the raw
/// graph toward the target, re-derived from wherever it stands.
pub fn policy_geometric_sp(episode: &Episode, graph: &NavGraph) -> Result<BasePolicy> {
    let dist = graph.hop_distances(&episode.target)?;
    if !dist.contains_key(&episode.start_node) {
        return Err(Error::UnreachableTarget(episode.target.clone()));
    }
    Ok(BasePolicy::GeometricSp(GeometricSp { target: episode.target.clone(), dist_to_target: dist }))
}

/// Compliant oracle: follows the constrained shortest path over the
/// line graph, replanning whenever it is displaced from its plan.
pub fn policy_compliant_oracle(episode: &Episode) -> BasePolicy {
    BasePolicy::CompliantOracle(OraclePolicy {
        target: episode.target.clone(),
        plan: Vec::new(),
        plan_pos: 0,
        planned_for: None,
    })
}

impl BasePolicy {
    pub fn new(kind: PolicyKind, episode: &Episode, graph: &NavGraph) -> Result<BasePolicy> {
        Ok(match kind {
            PolicyKind::RouteFollower => policy_route_follower(episode),
            PolicyKind::GeometricSp => policy_geometric_sp(episode, graph)?,
            PolicyKind::CompliantOracle => policy_compliant_oracle(episode),
        })
    }

    /// The next intended out-edge, or `None` when the policy has nothing
    /// left to propose.
    pub fn intended_edge(
        &mut self,
        graph: &NavGraph,
        constraints: &ConstraintSet,
        state: &AgentState,
        route_progress: usize,
    ) -> Result<Option<EdgeKey>> {
        match self {
            BasePolicy::RouteFollower(p) => p.intended(graph, state, route_progress),
            BasePolicy::GeometricSp(p) => p.intended(graph, state),
            BasePolicy::CompliantOracle(p) => p.intended(graph, constraints, state),
        }
    }
}

pub struct RouteFollower {
    route: Vec<NodeId>,
    /// Hop-distance fields from re-aim targets, filled lazily.
    reaim_cache: BTreeMap<NodeId, BTreeMap<NodeId, usize>>,
}

impl RouteFollower {
    fn intended(
        &mut self,
        graph: &NavGraph,
        state: &AgentState,
        progress: usize,
    ) -> Result<Option<EdgeKey>> {
        if state.node == self.route[progress] {
            return Ok(self
                .route
                .get(progress + 1)
                .map(|next| EdgeKey { from: state.node.clone(), to: next.clone() }));
        }
        // Off route: head for the nearest route node strictly ahead of
        // the matched progress, ties toward the earliest.
        let from_here = graph.hop_distances(&state.node)?;
        let mut best: Option<(usize, usize)> = None;
        for (j, node) in self.route.iter().enumerate().skip(progress + 1) {
            if let Some(&d) = from_here.get(node) {
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
        }
        let Some((_, j)) = best else { return Ok(None) };
        let goal = self.route[j].clone();
        let dist = match self.reaim_cache.get(&goal) {
            Some(d) => d,
            None => {
                let d = graph.hop_distances(&goal)?;
                self.reaim_cache.entry(goal.clone()).or_insert(d)
            }
        };
        Ok(next_hop_toward(graph, &state.node, dist))
    }
}

pub struct GeometricSp {
    #[allow(dead_code)]
    target: NodeId,
    dist_to_target: BTreeMap<NodeId, usize>,
}

impl GeometricSp {
    fn intended(&self, graph: &NavGraph, state: &AgentState) -> Result<Option<EdgeKey>> {
        if self.dist_to_target.get(&state.node) == Some(&0) {
            return Ok(None);
        }
        Ok(next_hop_toward(graph, &state.node, &self.dist_to_target))
    }
}

/// First hop of a shortest path by walking downhill on a distance field
/// (deterministic: outgoing edges iterate in sorted order).
fn next_hop_toward(
    graph: &NavGraph,
    at: &NodeId,
    dist_to_goal: &BTreeMap<NodeId, usize>,
) -> Option<EdgeKey> {
    let here = *dist_to_goal.get(at)?;
    graph
        .outgoing(at)
        .ok()?
        .filter(|e| dist_to_goal.get(&e.to).map_or(false, |&d| d + 1 == here))
        .map(|e| e.key())
        .next()
}

pub struct OraclePolicy {
    target: NodeId,
    plan: Vec<NodeId>,
    plan_pos: usize,
    planned_for: Option<(NodeId, Option<EdgeKey>)>,
}

impl OraclePolicy {
    fn intended(
        &mut self,
        graph: &NavGraph,
        constraints: &ConstraintSet,
        state: &AgentState,
    ) -> Result<Option<EdgeKey>> {
        let pose = (state.node.clone(), state.in_edge.clone());
        let on_plan = self.planned_for.is_some()
            && self.plan_pos < self.plan.len()
            && self.plan[self.plan_pos] == state.node;
        if !on_plan || self.planned_for.as_ref() != Some(&pose) {
            match compliant_shortest_path(
                graph,
                constraints,
                &state.node,
                state.in_edge.as_ref(),
                &self.target,
            )? {
                Some(path) => {
                    self.plan = path;
                    self.plan_pos = 0;
                }
                None => return Ok(None),
            }
        }
        let next = self.plan.get(self.plan_pos + 1).cloned();
        match next {
            Some(next) => {
                let key = EdgeKey { from: state.node.clone(), to: next };
                // Advance the cursor and remember the pose the next
                // query should arrive from.
                self.plan_pos += 1;
                self.planned_for = Some((key.to.clone(), Some(key.clone())));
                Ok(Some(key))
            }
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench_gen::Route;
    use crate::graph::generate_grid;
    use crate::rules::{demo_catalog, resolve_constraints, Facing, RuleId, SignPlacement};

    fn episode(graph: &NavGraph, nodes: &[&str]) -> Episode {
        let route = Route {
            id: "t".into(),
            nodes: nodes.iter().map(|n| NodeId::from(*n)).collect(),
            target: NodeId::from(*nodes.last().unwrap()),
        };
        Episode::from_route(&route, graph).unwrap()
    }

    #[test]
    fn follower_walks_route_in_order() {
        let g = generate_grid(3, 3, 1.0, 0).unwrap();
        let ep = episode(&g, &["r0c0", "r0c1", "r1c1", "r2c1"]);
        let mut policy = policy_route_follower(&ep);
        let empty = ConstraintSet::default();
        let state = AgentState::start(NodeId::from("r0c0"), ep.start_heading);
        let next = policy.intended_edge(&g, &empty, &state, 0).unwrap().unwrap();
        assert_eq!(next, EdgeKey::new("r0c0", "r0c1"));
    }

    #[test]
    fn follower_reaims_when_off_route() {
        let g = generate_grid(3, 3, 1.0, 0).unwrap();
        let ep = episode(&g, &["r0c0", "r0c1", "r0c2", "r1c2"]);
        let mut policy = policy_route_follower(&ep);
        let empty = ConstraintSet::default();
        // Standing at r1c1 (adjacent to route index 1) with progress 0.
        let state = AgentState::start(NodeId::from("r1c1"), 0.0);
        let next = policy.intended_edge(&g, &empty, &state, 0).unwrap().unwrap();
        // Nearest unreached route node is r0c1 (distance 1); move to it.
        assert_eq!(next.to, NodeId::from("r0c1"));
    }

    #[test]
    fn geometric_sp_walks_manhattan_path() {
        let g = generate_grid(4, 4, 1.0, 0).unwrap();
        let ep = episode(&g, &["r0c0", "r1c0", "r2c0", "r3c0", "r3c1"]);
        let mut policy = policy_geometric_sp(&ep, &g).unwrap();
        let empty = ConstraintSet::default();
        let mut at = NodeId::from("r0c0");
        let mut hops = 0;
        while at != ep.target {
            let state = AgentState::start(at.clone(), 0.0);
            let next = policy.intended_edge(&g, &empty, &state, 0).unwrap().unwrap();
            at = next.to;
            hops += 1;
            assert!(hops <= 8);
        }
        assert_eq!(hops, 4);
    }

    #[test]
    fn geometric_sp_at_target_stops() {
        let g = generate_grid(2, 2, 1.0, 0).unwrap();
        let ep = episode(&g, &["r0c0", "r0c1"]);
        let mut policy = policy_geometric_sp(&ep, &g).unwrap();
        let empty = ConstraintSet::default();
        let state = AgentState::start(NodeId::from("r0c1"), 0.0);
        assert!(policy.intended_edge(&g, &empty, &state, 0).unwrap().is_none());
    }

    #[test]
    fn geometric_sp_unknown_target_errors() {
        let g = generate_grid(2, 2, 1.0, 0).unwrap();
        let mut ep = episode(&g, &["r0c0", "r0c1"]);
        ep.target = NodeId::from("nowhere");
        assert!(policy_geometric_sp(&ep, &g).is_err());
    }

    #[test]
    fn oracle_avoids_banned_center() {
        let g = generate_grid(3, 3, 1.0, 0).unwrap();
        let catalog = demo_catalog();
        let set = resolve_constraints(
            &g,
            &catalog,
            &[SignPlacement {
                node: NodeId::from("r1c1"),
                rule: RuleId::new("no-entry"),
                facing: Facing::All,
                legibility: 1.0,
            }],
        )
        .unwrap();
        let ep = episode(&g, &["r0c0", "r0c1", "r1c1", "r2c1", "r2c2"]);
        let mut policy = policy_compliant_oracle(&ep);
        let mut state = AgentState::start(NodeId::from("r0c0"), ep.start_heading);
        let mut visited = vec![state.node.clone()];
        for _ in 0..10 {
            if state.node == ep.target {
                break;
            }
            let next = policy.intended_edge(&g, &set, &state, 0).unwrap().unwrap();
            assert!(set.mask(state.in_edge.as_ref(), &next), "oracle must stay compliant");
            state.heading = g.edge(&next).unwrap().heading;
            state.node = next.to.clone();
            state.in_edge = Some(next);
            visited.push(state.node.clone());
        }
        assert_eq!(state.node, ep.target);
        assert!(!visited.contains(&NodeId::from("r1c1")));
        assert_eq!(visited.len() - 1, 4);
    }
}
