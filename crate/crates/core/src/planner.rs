//! The rectification control layer: wraps any base policy, consults the
//! perception gate, and on conflict switches to detour mode driven by an
//! egocentric mental map — dead reckoning, penalized greedy candidate
//! selection, loop-trap detection, and detour exit.
//!
//! The mental map lives in the conflict pose's frame: the conflict node
//! is the origin and the agent's heading there is +y, so the intended
//! target anchors at `(sin d, cos d)` for the intended edge's relative
//! heading `d`, and dead-reckoned displacements use headings relative to
//! the same anchor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bearing, heading_dir, normalize_heading, turn_delta, Vec2};
use crate::graph::{DirectedEdge, EdgeKey, NavGraph, NodeId};
use crate::perception::{
    fnv1a, gate, step_rng, PerceptionConfig, SafetyToken, SafetyVerdict, StepPerception,
};
use crate::rules::{classify_turn, DiscreteAction, RuleCatalog};

/// Planner tuning knobs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Penalty added to candidates predicted near already-visited points.
    pub backtrack_penalty: f64,
    /// Radius around visited points that triggers the penalty.
    pub critical_radius: f64,
    /// Cosine similarity above which a loop trap is declared.
    pub loop_similarity_threshold: f64,
    /// Distance to the target anchor below which the detour exits.
    pub exit_radius: f64,
    /// Detour step budget; 0 means four times the gold-route length.
    pub max_detour_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            backtrack_penalty: 5.0,
            critical_radius: 0.5,
            loop_similarity_threshold: 0.98,
            exit_radius: 0.5,
            max_detour_steps: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backtrack_penalty <= 0.0 {
            return Err(Error::Validation("backtrack_penalty must be positive".into()));
        }
        if self.critical_radius <= 0.0 || self.exit_radius <= 0.0 {
            return Err(Error::Validation("planner radii must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loop_similarity_threshold)
            || self.loop_similarity_threshold == 0.0
        {
            return Err(Error::Validation(
                "loop_similarity_threshold must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Effective detour budget for a route of `route_len` nodes.
    pub fn detour_budget(&self, route_len: usize) -> usize {
        if self.max_detour_steps > 0 {
            self.max_detour_steps
        } else {
            4 * route_len.max(1)
        }
    }
}

/// Simulated node feature: frame-relative position, neighborhood degree
/// histogram, own degree, plus small seeded noise — a stand-in for the
/// visual features a real system would embed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

/// Position components are scaled by this factor (in mean-edge-length
/// units) so neighboring nodes fall well below the loop similarity
/// threshold while a revisited node still matches itself exactly.
const FEATURE_POSITION_SCALE: f64 = 2.0;
const FEATURE_NOISE: f64 = 0.01;

impl FeatureVector {
    /// Feature of `node` in the frame anchored at `frame_origin`.
    /// Noise is keyed by (seed, node) only, so revisiting a node inside
    /// one episode reproduces the identical vector.
    pub fn for_node(
        graph: &NavGraph,
        node: &NodeId,
        frame_origin: Vec2,
        episode_seed: u64,
    ) -> Result<FeatureVector> {
        use rand::Rng;
        let n = graph.node(node)?;
        let scale = FEATURE_POSITION_SCALE / graph.mean_edge_length();
        let mut values = vec![
            (n.position.x - frame_origin.x) * scale,
            (n.position.y - frame_origin.y) * scale,
        ];
        let mut hist = [0.0f64; 5];
        for edge in graph.outgoing(node)? {
            let d = graph.out_degree(&edge.to).min(4);
            hist[d] += 1.0;
        }
        values.extend_from_slice(&hist);
        values.push(graph.out_degree(node) as f64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(fnv1a(
            episode_seed ^ 0x5eed_f00d,
            node.as_str().as_bytes(),
        ));
        for v in &mut values {
            *v += rng.random_range(-FEATURE_NOISE..FEATURE_NOISE);
        }
        Ok(FeatureVector { values })
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let na: f64 = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = other.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        dot / (na * nb)
    }
}

use rand::SeedableRng;

/// The egocentric map built at a rule conflict.
#[derive(Clone, Debug)]
pub struct MentalMap {
    pub origin_node: NodeId,
    /// Agent heading at the conflict; the +y axis of the map frame.
    pub origin_heading: f64,
    /// Unit anchor of the intended direction: (sin d, cos d).
    pub target_anchor: Vec2,
    /// Dead-reckoned deviation point, starting at the origin (0, 0).
    pub position: Vec2,
    /// Visited points in map coordinates, origin included.
    pub visited: Vec<(NodeId, Vec2)>,
    pub start_feature: FeatureVector,
    pub active: bool,
}

impl MentalMap {
    /// Open a map at a conflict: the intended (blocked) edge anchors the
    /// target direction.
    pub fn open(
        graph: &NavGraph,
        at: &NodeId,
        agent_heading: f64,
        intended: &DirectedEdge,
        episode_seed: u64,
    ) -> Result<MentalMap> {
        let expected_rel = normalize_heading(intended.heading - agent_heading);
        let origin_pos = graph.node(at)?.position;
        Ok(MentalMap {
            origin_node: at.clone(),
            origin_heading: agent_heading,
            target_anchor: heading_dir(expected_rel),
            position: Vec2::ZERO,
            visited: vec![(at.clone(), Vec2::ZERO)],
            start_feature: FeatureVector::for_node(graph, at, origin_pos, episode_seed)?,
            active: true,
        })
    }

    /// Map-frame heading of an absolute heading.
    pub fn relative_heading(&self, absolute: f64) -> f64 {
        normalize_heading(absolute - self.origin_heading)
    }

    /// One-step look-ahead position after traversing `edge`.
    pub fn predict(&self, edge: &DirectedEdge, mean_edge_length: f64) -> Vec2 {
        let rel = self.relative_heading(edge.heading);
        self.position + heading_dir(rel).scale(edge.length / mean_edge_length)
    }
}

/// Dead-reckoning update after executing `edge`: shift the deviation
/// point by the heading-scaled normalized displacement and record the
/// arrival point.
pub fn update_dead_reckoning(map: &mut MentalMap, edge: &DirectedEdge, mean_edge_length: f64) {
    let rel = map.relative_heading(edge.heading);
    map.position += heading_dir(rel).scale(edge.length / mean_edge_length);
    map.visited.push((edge.to.clone(), map.position));
}

/// Loop-trap test: current features nearly identical to the conflict
/// origin's. Callers require at least three elapsed detour steps.
pub fn loop_trap_check(map: &MentalMap, current: &FeatureVector, config: &PlannerConfig) -> bool {
    current.cosine(&map.start_feature) > config.loop_similarity_threshold
}

/// Why a detour hands control back to the base policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetourExit {
    /// Standing on a gold-route node strictly after the conflict point.
    RejoinedRoute(usize),
    /// Dead-reckoned position within the exit radius of the anchor.
    AnchorReached,
}

/// Exit test for an active detour.
pub fn detour_exit_check(
    current: &NodeId,
    map: &MentalMap,
    gold_route: &[NodeId],
    conflict_progress: usize,
    config: &PlannerConfig,
) -> Option<DetourExit> {
    for (j, node) in gold_route.iter().enumerate().skip(conflict_progress + 1) {
        if node == current {
            return Some(DetourExit::RejoinedRoute(j));
        }
    }
    if map.position.dist(map.target_anchor) < config.exit_radius {
        return Some(DetourExit::AnchorReached);
    }
    None
}

/// A selectable detour candidate.
#[derive(Clone, Debug)]
pub struct DetourCandidate {
    pub edge: EdgeKey,
    pub node: NodeId,
    /// Map-frame heading of the candidate edge.
    pub rel_heading: f64,
    /// Predicted map position after taking it.
    pub predicted: Vec2,
}

/// Record of one detour selection, sufficient to re-evaluate the cost
/// expression independently.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetourDecision {
    pub step: usize,
    pub position: (f64, f64),
    pub target_anchor: (f64, f64),
    pub visited: Vec<(f64, f64)>,
    pub lambda: f64,
    pub critical_radius: f64,
    pub candidates: Vec<DecisionCandidate>,
    pub chosen: NodeId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecisionCandidate {
    pub node: NodeId,
    pub predicted: (f64, f64),
    pub rel_heading: f64,
}

/// Penalized greedy selection: minimize distance from the predicted
/// point to the target anchor, plus `lambda` when the prediction falls
/// within the critical radius of any visited point. Ties break by the
/// smallest heading deviation from the bearing toward the anchor, then
/// by node id.
pub fn detour_select<'a>(
    map: &MentalMap,
    candidates: &'a [DetourCandidate],
    lambda: f64,
    config: &PlannerConfig,
) -> Result<&'a DetourCandidate> {
    if candidates.is_empty() {
        return Err(Error::Validation("detour selection over no candidates".into()));
    }
    let toward_target = bearing(map.position, map.target_anchor);
    let mut best: Option<(&DetourCandidate, f64, f64)> = None;
    for cand in candidates {
        let near_visited = map
            .visited
            .iter()
            .any(|(_, p)| cand.predicted.dist(*p) <= config.critical_radius);
        let cost = cand.predicted.dist(map.target_anchor)
            + if near_visited { lambda } else { 0.0 };
        let deviation = turn_delta(toward_target, cand.rel_heading).abs();
        let better = match &best {
            None => true,
            Some((b, bc, bd)) => {
                cost < bc - 1e-12
                    || (cost <= bc + 1e-12
                        && (deviation < bd - 1e-12
                            || (deviation <= bd + 1e-12 && cand.node < b.node)))
            }
        };
        if better {
            best = Some((cand, cost, deviation));
        }
    }
    Ok(best.expect("candidates non-empty").0)
}

/// Detour bookkeeping while the map is active.
#[derive(Clone, Debug)]
pub struct DetourState {
    pub map: MentalMap,
    pub steps: usize,
    pub conflict_progress: usize,
    pub budget: usize,
    /// Set by a loop trap: exclude this edge and double the penalty for
    /// the next selection.
    pub forced_exclude: Option<EdgeKey>,
}

/// Agent mode: following the base policy or detouring on the map.
#[derive(Clone, Debug, Default)]
pub enum Mode {
    #[default]
    Base,
    Detour(Box<DetourState>),
}

impl Mode {
    pub fn tag(&self) -> ModeTag {
        match self {
            Mode::Base => ModeTag::Base,
            Mode::Detour(_) => ModeTag::Detour,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Base,
    Detour,
}

/// The agent's pose and control mode.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub node: NodeId,
    pub heading: f64,
    pub in_edge: Option<EdgeKey>,
    pub step: usize,
    pub mode: Mode,
}

impl AgentState {
    pub fn start(node: NodeId, heading: f64) -> AgentState {
        AgentState { node, heading: normalize_heading(heading), in_edge: None, step: 0, mode: Mode::Base }
    }
}

/// Why the planner halted an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// Every move from here is perceived forbidden.
    DeadEnd,
    /// Mental map disabled: stop at the first conflict.
    StoppedAtConflict,
    /// The detour budget ran out.
    DetourBudgetExhausted,
    /// The base policy had no action to offer.
    PolicyExhausted,
}

/// Everything a step needs besides the agent state.
pub struct StepEnv<'a> {
    pub graph: &'a NavGraph,
    pub catalog: &'a RuleCatalog,
    pub perception: PerceptionConfig,
    pub planner: PlannerConfig,
    pub episode_seed: u64,
    pub gold_route: &'a [NodeId],
    /// Ablation: when false, a conflict stops the episode instead of
    /// opening the mental map.
    pub mental_map_enabled: bool,
}

/// Outcome of one planner step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub executed: Option<ExecutedMove>,
    pub halt: Option<HaltReason>,
    pub verdict: Option<SafetyVerdict>,
    pub decision: Option<DetourDecision>,
    pub mode_after: ModeTag,
    pub detour_exit: Option<DetourExit>,
}

#[derive(Clone, Debug)]
pub struct ExecutedMove {
    pub edge: EdgeKey,
    pub action: DiscreteAction,
}

/// Advance the agent one step under rectification.
///
/// In base mode the intended action is queried from `base_action` and
/// gated; `Safe` executes it, a conflict opens the mental map, executes
/// the corrective action and enters detour mode. In detour mode the
/// perception-legal candidates run through the penalized selection, with
/// a forced reverse fallback when only exclusions emptied the list.
pub fn step(
    state: &mut AgentState,
    env: &StepEnv<'_>,
    base_action: &mut dyn FnMut(&AgentState) -> Option<EdgeKey>,
    route_progress: usize,
) -> Result<StepResult> {
    match std::mem::take(&mut state.mode) {
        Mode::Base => base_step(state, env, base_action, route_progress),
        Mode::Detour(ctx) => detour_step(state, env, base_action, route_progress, *ctx),
    }
}

fn halted(reason: HaltReason, state: &AgentState) -> StepResult {
    StepResult {
        executed: None,
        halt: Some(reason),
        verdict: None,
        decision: None,
        mode_after: state.mode.tag(),
        detour_exit: None,
    }
}

fn apply_move(state: &mut AgentState, edge: &DirectedEdge) -> ExecutedMove {
    let action = classify_turn(state.heading, edge.heading);
    state.node = edge.to.clone();
    state.heading = edge.heading;
    state.in_edge = Some(edge.key());
    state.step += 1;
    ExecutedMove { edge: edge.key(), action }
}

fn base_step(
    state: &mut AgentState,
    env: &StepEnv<'_>,
    base_action: &mut dyn FnMut(&AgentState) -> Option<EdgeKey>,
    route_progress: usize,
) -> Result<StepResult> {
    state.mode = Mode::Base;
    let Some(intended_key) = base_action(state) else {
        return Ok(halted(HaltReason::PolicyExhausted, state));
    };
    let intended = env.graph.edge(&intended_key)?.clone();
    let obs = env.graph.observe(&state.node, state.heading)?;
    let mut rng = step_rng(env.episode_seed, &state.node, state.step);
    let scan = StepPerception::scan(&obs, env.catalog, &env.perception, &mut rng);
    let arrival = state.in_edge.as_ref().map(|_| state.heading);
    let verdict = gate(env.graph, &obs, &scan, arrival, &intended, env.catalog)?;

    match verdict.token {
        SafetyToken::Safe => {
            let executed = apply_move(state, &intended);
            Ok(StepResult {
                executed: Some(executed),
                halt: None,
                verdict: Some(verdict),
                decision: None,
                mode_after: ModeTag::Base,
                detour_exit: None,
            })
        }
        SafetyToken::Blocked => {
            let reason = if env.mental_map_enabled {
                HaltReason::DeadEnd
            } else {
                HaltReason::StoppedAtConflict
            };
            let mut result = halted(reason, state);
            result.verdict = Some(verdict);
            Ok(result)
        }
        SafetyToken::CorrectAction(_) => {
            if !env.mental_map_enabled {
                let mut result = halted(HaltReason::StoppedAtConflict, state);
                result.verdict = Some(verdict);
                return Ok(result);
            }
            let corrective_key = verdict
                .corrective_edge
                .clone()
                .expect("corrective verdicts carry their edge");
            let corrective = env.graph.edge(&corrective_key)?.clone();
            let mut map =
                MentalMap::open(env.graph, &state.node, state.heading, &intended, env.episode_seed)?;
            update_dead_reckoning(&mut map, &corrective, env.graph.mean_edge_length());
            let executed = apply_move(state, &corrective);
            state.mode = Mode::Detour(Box::new(DetourState {
                map,
                steps: 1,
                conflict_progress: route_progress,
                budget: env.planner.detour_budget(env.gold_route.len()),
                forced_exclude: None,
            }));
            Ok(StepResult {
                executed: Some(executed),
                halt: None,
                verdict: Some(verdict),
                decision: None,
                mode_after: ModeTag::Detour,
                detour_exit: None,
            })
        }
    }
}

fn detour_step(
    state: &mut AgentState,
    env: &StepEnv<'_>,
    base_action: &mut dyn FnMut(&AgentState) -> Option<EdgeKey>,
    route_progress: usize,
    mut ctx: DetourState,
) -> Result<StepResult> {
    // Hand control back before planning when an exit condition holds.
    if let Some(exit) =
        detour_exit_check(&state.node, &ctx.map, env.gold_route, ctx.conflict_progress, &env.planner)
    {
        state.mode = Mode::Base;
        let mut result = base_step(state, env, base_action, route_progress)?;
        result.detour_exit = Some(exit);
        return Ok(result);
    }
    if ctx.steps >= ctx.budget {
        state.mode = Mode::Detour(Box::new(ctx));
        return Ok(halted(HaltReason::DetourBudgetExhausted, state));
    }

    let obs = env.graph.observe(&state.node, state.heading)?;
    let mut rng = step_rng(env.episode_seed, &state.node, state.step);
    let scan = StepPerception::scan(&obs, env.catalog, &env.perception, &mut rng);
    let arrival = Some(state.heading);
    let mean_len = env.graph.mean_edge_length();

    let forced = ctx.forced_exclude.take();
    let lambda = if forced.is_some() {
        env.planner.backtrack_penalty * 2.0
    } else {
        env.planner.backtrack_penalty
    };

    let mut candidates = Vec::new();
    let mut excluded_reverse: Option<DirectedEdge> = None;
    for edge in env.graph.outgoing(&state.node)? {
        if Some(&edge.key()) == forced.as_ref() {
            excluded_reverse = Some(edge.clone());
            continue;
        }
        if scan
            .perceived_forbidding_rule(env.graph, &obs, arrival, edge, env.catalog)
            .is_some()
        {
            continue;
        }
        candidates.push(DetourCandidate {
            edge: edge.key(),
            node: edge.to.clone(),
            rel_heading: ctx.map.relative_heading(edge.heading),
            predicted: ctx.map.predict(edge, mean_len),
        });
    }

    let chosen_edge = if candidates.is_empty() {
        // All neighbors forbidden or excluded: forced backtrack over the
        // reverse edge, penalty notwithstanding — but never through a
        // perceived prohibition.
        let reverse = match excluded_reverse {
            Some(edge) => Some(edge),
            None => match &state.in_edge {
                Some(in_edge) => {
                    let key = in_edge.reversed();
                    env.graph.edge(&key).ok().cloned()
                }
                None => None,
            },
        };
        let legal_reverse = reverse.filter(|edge| {
            scan.perceived_forbidding_rule(env.graph, &obs, arrival, edge, env.catalog)
                .is_none()
        });
        match legal_reverse {
            Some(edge) => edge,
            None => {
                state.mode = Mode::Detour(Box::new(ctx));
                return Ok(halted(HaltReason::DeadEnd, state));
            }
        }
    } else {
        let chosen = detour_select(&ctx.map, &candidates, lambda, &env.planner)?;
        let key = chosen.edge.clone();
        env.graph.edge(&key)?.clone()
    };

    let decision = if candidates.is_empty() {
        None
    } else {
        Some(DetourDecision {
            step: state.step,
            position: (ctx.map.position.x, ctx.map.position.y),
            target_anchor: (ctx.map.target_anchor.x, ctx.map.target_anchor.y),
            visited: ctx.map.visited.iter().map(|(_, p)| (p.x, p.y)).collect(),
            lambda,
            critical_radius: env.planner.critical_radius,
            candidates: candidates
                .iter()
                .map(|c| DecisionCandidate {
                    node: c.node.clone(),
                    predicted: (c.predicted.x, c.predicted.y),
                    rel_heading: c.rel_heading,
                })
                .collect(),
            chosen: chosen_edge.to.clone(),
        })
    };

    update_dead_reckoning(&mut ctx.map, &chosen_edge, mean_len);
    let executed = apply_move(state, &chosen_edge);
    ctx.steps += 1;

    if ctx.steps >= 3 {
        let origin_pos = env.graph.node(&ctx.map.origin_node)?.position;
        let current =
            FeatureVector::for_node(env.graph, &state.node, origin_pos, env.episode_seed)?;
        if loop_trap_check(&ctx.map, &current, &env.planner) {
            ctx.forced_exclude = Some(executed.edge.reversed());
        }
    }

    state.mode = Mode::Detour(Box::new(ctx));
    Ok(StepResult {
        executed: Some(executed),
        halt: None,
        verdict: None,
        decision,
        mode_after: ModeTag::Detour,
        detour_exit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_grid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn test_map() -> MentalMap {
        let graph = generate_grid(3, 3, 1.0, 0).unwrap();
        let intended = graph.edge(&EdgeKey::new("r1c1", "r2c1")).unwrap();
        MentalMap::open(&graph, &NodeId::from("r1c1"), 0.0, intended, 7).unwrap()
    }

    #[test]
    fn map_anchors_intended_direction() {
        let graph = generate_grid(3, 3, 1.0, 0).unwrap();
        // Heading north, intending the eastward edge: anchor at (1, 0).
        let intended = graph.edge(&EdgeKey::new("r1c1", "r1c2")).unwrap();
        let map = MentalMap::open(&graph, &NodeId::from("r1c1"), 0.0, intended, 7).unwrap();
        assert_abs_diff_eq!(map.target_anchor.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.target_anchor.y, 0.0, epsilon = 1e-12);
        assert_eq!(map.visited.len(), 1);
    }

    #[test]
    fn dead_reckoning_examples() {
        let graph = generate_grid(3, 3, 1.0, 0).unwrap();
        let mut map = test_map();
        // Executing heading 0 at unit length shifts by (0, 1).
        let north = graph.edge(&EdgeKey::new("r1c1", "r2c1")).unwrap();
        update_dead_reckoning(&mut map, north, 1.0);
        assert_abs_diff_eq!(map.position.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(map.position.y, 1.0, epsilon = 1e-12);
        assert_eq!(map.visited.len(), 2);

        // N, E, S, W cancels out.
        let mut map = test_map();
        for key in [
            EdgeKey::new("r1c1", "r2c1"),
            EdgeKey::new("r2c1", "r2c2"),
            EdgeKey::new("r2c2", "r1c2"),
            EdgeKey::new("r1c2", "r1c1"),
        ] {
            let edge = graph.edge(&key).unwrap();
            update_dead_reckoning(&mut map, edge, 1.0);
        }
        assert!(map.position.norm() < 1e-9);
        assert_eq!(map.visited.len(), 5);
    }

    #[test]
    fn detour_select_penalizes_backtrack() {
        let mut map = test_map();
        map.target_anchor = Vec2::new(0.0, 1.0);
        map.position = Vec2::new(1.0, 0.0);
        map.visited = vec![(NodeId::from("r1c1"), Vec2::ZERO)];
        let candidates = vec![
            DetourCandidate {
                edge: EdgeKey::new("x", "a"),
                node: NodeId::from("a"),
                rel_heading: 0.0,
                predicted: Vec2::new(1.0, 1.0),
            },
            DetourCandidate {
                edge: EdgeKey::new("x", "b"),
                node: NodeId::from("b"),
                rel_heading: PI,
                predicted: Vec2::ZERO,
            },
        ];
        let config = PlannerConfig::default();
        // Costs: a -> 1.0; b -> 1.0 + 5.0 penalty.
        let chosen = detour_select(&map, &candidates, config.backtrack_penalty, &config).unwrap();
        assert_eq!(chosen.node, NodeId::from("a"));
    }

    #[test]
    fn detour_select_single_candidate_and_ties() {
        let map = test_map();
        let single = vec![DetourCandidate {
            edge: EdgeKey::new("x", "only"),
            node: NodeId::from("only"),
            rel_heading: 0.0,
            predicted: Vec2::new(0.3, 0.3),
        }];
        let config = PlannerConfig::default();
        assert_eq!(
            detour_select(&map, &single, config.backtrack_penalty, &config).unwrap().node,
            NodeId::from("only")
        );

        // Two equidistant unvisited candidates: the one whose heading
        // deviates least from the bearing toward the anchor wins.
        let mut map = test_map();
        map.target_anchor = Vec2::new(0.0, 1.0);
        map.position = Vec2::ZERO;
        map.visited.clear();
        let ties = vec![
            DetourCandidate {
                edge: EdgeKey::new("x", "p"),
                node: NodeId::from("p"),
                rel_heading: PI / 2.0,
                predicted: Vec2::new(1.0, 1.0),
            },
            DetourCandidate {
                edge: EdgeKey::new("x", "q"),
                node: NodeId::from("q"),
                rel_heading: PI / 8.0,
                predicted: Vec2::new(-1.0, 1.0),
            },
        ];
        let chosen = detour_select(&map, &ties, config.backtrack_penalty, &config).unwrap();
        assert_eq!(chosen.node, NodeId::from("q"));
    }

    #[test]
    fn detour_select_scale_invariance() {
        // Scaling all distances and the radius by c and lambda by c
        // preserves the choice.
        let mut map = test_map();
        map.target_anchor = Vec2::new(0.4, 1.2);
        map.position = Vec2::new(1.0, -0.3);
        map.visited = vec![(NodeId::from("v"), Vec2::new(0.9, 0.6))];
        let candidates: Vec<DetourCandidate> = [(0.8, 0.7), (1.3, 0.5), (0.2, -0.1)]
            .iter()
            .enumerate()
            .map(|(i, (x, y))| DetourCandidate {
                edge: EdgeKey::new("x", format!("c{i}").as_str()),
                node: NodeId::new(format!("c{i}")),
                rel_heading: i as f64,
                predicted: Vec2::new(*x, *y),
            })
            .collect();
        let config = PlannerConfig::default();
        let base = detour_select(&map, &candidates, config.backtrack_penalty, &config)
            .unwrap()
            .node
            .clone();
        for c in [0.5, 2.0, 10.0] {
            let scaled_map = MentalMap {
                target_anchor: map.target_anchor.scale(c),
                position: map.position.scale(c),
                visited: map.visited.iter().map(|(n, p)| (n.clone(), p.scale(c))).collect(),
                ..map.clone()
            };
            let scaled_candidates: Vec<DetourCandidate> = candidates
                .iter()
                .map(|cd| DetourCandidate { predicted: cd.predicted.scale(c), ..cd.clone() })
            .collect();
            let scaled_config = PlannerConfig {
                critical_radius: config.critical_radius * c,
                ..config
            };
            let chosen = detour_select(
                &scaled_map,
                &scaled_candidates,
                config.backtrack_penalty * c,
                &scaled_config,
            )
            .unwrap();
            assert_eq!(chosen.node, base);
        }
    }

    #[test]
    fn loop_trap_examples() {
        let map = test_map();
        let config = PlannerConfig::default();
        assert!(loop_trap_check(&map, &map.start_feature.clone(), &config));
        let orthogonal = FeatureVector {
            values: {
                let mut v = vec![0.0; map.start_feature.values.len()];
                // Orthogonal by construction: swap a zero pattern in.
                v[0] = map.start_feature.values[1];
                v[1] = -map.start_feature.values[0];
                v
            },
        };
        assert!(!loop_trap_check(&map, &orthogonal, &config));
    }

    #[test]
    fn loop_trap_fires_on_origin_return_only() {
        let graph = generate_grid(5, 5, 1.0, 0).unwrap();
        let origin = NodeId::from("r2c2");
        let origin_pos = graph.node(&origin).unwrap().position;
        let start = FeatureVector::for_node(&graph, &origin, origin_pos, 99).unwrap();
        let map = MentalMap {
            start_feature: start,
            ..test_map()
        };
        let config = PlannerConfig::default();
        // Same node, fresh computation: noise reproduces, cosine 1.
        let again = FeatureVector::for_node(&graph, &origin, origin_pos, 99).unwrap();
        assert!(loop_trap_check(&map, &again, &config));
        // Every other node stays below the threshold.
        for id in graph.node_ids() {
            if *id == origin {
                continue;
            }
            let f = FeatureVector::for_node(&graph, id, origin_pos, 99).unwrap();
            assert!(
                !loop_trap_check(&map, &f, &config),
                "node {id} similarity {} crossed the loop threshold",
                f.cosine(&map.start_feature)
            );
        }
    }

    #[test]
    fn exit_checks() {
        let mut map = test_map();
        let route: Vec<NodeId> =
            ["a", "b", "c", "d"].iter().map(|s| NodeId::from(*s)).collect();
        let config = PlannerConfig::default();
        // Standing on a route node after the conflict point.
        assert_eq!(
            detour_exit_check(&NodeId::from("c"), &map, &route, 1, &config),
            Some(DetourExit::RejoinedRoute(2))
        );
        // The conflict node itself does not exit.
        assert_eq!(detour_exit_check(&NodeId::from("b"), &map, &route, 1, &config), None);
        // Anchor proximity exits.
        map.position = Vec2::new(map.target_anchor.x + 0.1, map.target_anchor.y);
        assert_eq!(
            detour_exit_check(&NodeId::from("zz"), &map, &route, 1, &config),
            Some(DetourExit::AnchorReached)
        );
        map.position = Vec2::new(5.0, 5.0);
        assert_eq!(detour_exit_check(&NodeId::from("zz"), &map, &route, 1, &config), None);
    }
}
