//! The episode runner: drives a (possibly rectified) policy through an
//! episode, recording every transition with its ground-truth mask value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::episode::Episode;
use crate::eval::policy::{BasePolicy, PolicyKind};
use crate::graph::{NavGraph, NodeId};
use crate::perception::{fnv1a, PerceptionConfig, SafetyToken, SafetyVerdict};
use crate::planner::{
    self, AgentState, DetourDecision, HaltReason, ModeTag, PlannerConfig, StepEnv,
};
use crate::rules::{classify_turn, ConstraintSet, DiscreteAction, RuleCatalog};

/// Which rectification components are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSetup {
    /// Macro-micro visual prompting (coarse detection quality).
    pub mmvp: bool,
    /// Knowledge-driven rule grounding (classification quality).
    pub kdrg: bool,
    /// The epistemic mental map (detour planning; off means a conflict
    /// stops the episode).
    pub mental_map: bool,
}

impl AblationSetup {
    pub fn full() -> Self {
        AblationSetup { mmvp: true, kdrg: true, mental_map: true }
    }

    /// The five canonical ablation setups. Setup 1 is the bare base
    /// policy (rectification off entirely); 5 is the full stack.
    pub fn table(setup: u8) -> Result<(bool, AblationSetup)> {
        Ok(match setup {
            1 => (false, AblationSetup { mmvp: false, kdrg: false, mental_map: false }),
            2 => (true, AblationSetup { mmvp: true, kdrg: false, mental_map: true }),
            3 => (true, AblationSetup { mmvp: false, kdrg: true, mental_map: true }),
            4 => (true, AblationSetup { mmvp: true, kdrg: true, mental_map: false }),
            5 => (true, AblationSetup::full()),
            other => {
                return Err(Error::Validation(format!("ablation setup must be 1..=5, got {other}")))
            }
        })
    }
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ReachedTarget,
    MaxSteps,
    DeadEnd,
    StoppedAtConflict,
    DetourBudgetExhausted,
    NoCompliantPath,
    PolicyExhausted,
}

/// One executed transition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub action: DiscreteAction,
    /// Ground-truth validity of the executed transition.
    pub gt_mask: bool,
    /// Perception verdict that preceded the move ("ungated" without
    /// rectification, "detour" for map-driven moves).
    pub verdict: String,
    pub mode: ModeTag,
}

/// Full trace of one episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode_id: String,
    pub steps: Vec<StepRecord>,
    pub final_node: NodeId,
    pub terminated: TerminationReason,
    pub detour_decisions: Vec<DetourDecision>,
}

/// Immutable inputs shared by every episode of a run cell.
#[derive(Clone, Copy)]
pub struct RunSpec<'a> {
    /// The environment graph with this level's signs injected.
    pub graph: &'a NavGraph,
    pub catalog: &'a RuleCatalog,
    pub constraints: &'a ConstraintSet,
    pub perception: &'a PerceptionConfig,
    pub planner: &'a PlannerConfig,
    pub snrm: bool,
    pub ablation: AblationSetup,
    pub seed: u64,
}

fn verdict_label(verdict: &SafetyVerdict) -> String {
    match &verdict.token {
        SafetyToken::Safe => "safe".to_string(),
        SafetyToken::CorrectAction(a) => format!("correct:{a}"),
        SafetyToken::Blocked => "blocked".to_string(),
    }
}

/// Advance matched route progress: the earliest route position after
/// `progress` equal to the current node, if any.
fn advance_progress(route: &[NodeId], progress: usize, node: &NodeId) -> usize {
    for (j, r) in route.iter().enumerate().skip(progress + 1) {
        if r == node {
            return j;
        }
    }
    progress
}

/// Run one episode to termination.
pub fn run_episode(
    spec: &RunSpec<'_>,
    episode: &Episode,
    policy_kind: PolicyKind,
) -> Result<TrajectoryRecord> {
    episode.validate(spec.graph)?;
    spec.perception.validate()?;
    spec.planner.validate()?;
    let mut policy = BasePolicy::new(policy_kind, episode, spec.graph)?;
    let mut state = AgentState::start(episode.start_node.clone(), episode.start_heading);
    let mut progress = 0usize;
    let episode_seed = fnv1a(spec.seed ^ spec.perception.seed.rotate_left(17), episode.id.as_bytes());
    let effective_perception = spec.perception.effective(spec.ablation.mmvp, spec.ablation.kdrg);

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut decisions: Vec<DetourDecision> = Vec::new();
    let terminated;

    loop {
        if state.node == episode.target {
            terminated = TerminationReason::ReachedTarget;
            break;
        }
        if state.step >= episode.max_steps {
            terminated = TerminationReason::MaxSteps;
            break;
        }

        let before_node = state.node.clone();
        let before_in = state.in_edge.clone();

        if spec.snrm {
            let env = StepEnv {
                graph: spec.graph,
                catalog: spec.catalog,
                perception: effective_perception,
                planner: *spec.planner,
                episode_seed,
                gold_route: &episode.gold_route,
                mental_map_enabled: spec.ablation.mental_map,
            };
            let mut policy_err: Option<Error> = None;
            let result = {
                let constraints = spec.constraints;
                let graph = spec.graph;
                let policy = &mut policy;
                let mut base_action = |st: &AgentState| -> Option<crate::graph::EdgeKey> {
                    match policy.intended_edge(graph, constraints, st, progress) {
                        Ok(edge) => edge,
                        Err(e) => {
                            policy_err = Some(e);
                            None
                        }
                    }
                };
                planner::step(&mut state, &env, &mut base_action, progress)?
            };
            if let Some(e) = policy_err {
                return Err(e);
            }
            if let Some(decision) = result.decision {
                decisions.push(decision);
            }
            match result.executed {
                Some(moved) => {
                    let gt_mask = spec.constraints.mask(before_in.as_ref(), &moved.edge);
                    let verdict = match &result.verdict {
                        Some(v) => verdict_label(v),
                        None => "detour".to_string(),
                    };
                    steps.push(StepRecord {
                        from: before_node,
                        to: moved.edge.to.clone(),
                        action: moved.action,
                        gt_mask,
                        verdict,
                        mode: result.mode_after,
                    });
                }
                None => {
                    let reason = result.halt.expect("no move implies a halt");
                    terminated = match reason {
                        HaltReason::DeadEnd => TerminationReason::DeadEnd,
                        HaltReason::StoppedAtConflict => TerminationReason::StoppedAtConflict,
                        HaltReason::DetourBudgetExhausted => {
                            TerminationReason::DetourBudgetExhausted
                        }
                        HaltReason::PolicyExhausted => match policy_kind {
                            PolicyKind::CompliantOracle => TerminationReason::NoCompliantPath,
                            _ => TerminationReason::PolicyExhausted,
                        },
                    };
                    break;
                }
            }
        } else {
            // Ungated: execute the base policy verbatim.
            let intended = policy.intended_edge(spec.graph, spec.constraints, &state, progress)?;
            let Some(key) = intended else {
                terminated = match policy_kind {
                    PolicyKind::CompliantOracle => TerminationReason::NoCompliantPath,
                    _ => TerminationReason::PolicyExhausted,
                };
                break;
            };
            let edge = spec.graph.edge(&key)?.clone();
            let action = classify_turn(state.heading, edge.heading);
            let gt_mask = spec.constraints.mask(before_in.as_ref(), &key);
            state.node = edge.to.clone();
            state.heading = edge.heading;
            state.in_edge = Some(key);
            state.step += 1;
            steps.push(StepRecord {
                from: before_node,
                to: edge.to.clone(),
                action,
                gt_mask,
                verdict: "ungated".to_string(),
                mode: ModeTag::Base,
            });
        }

        progress = advance_progress(&episode.gold_route, progress, &state.node);
    }

    Ok(TrajectoryRecord {
        episode_id: episode.id.clone(),
        steps,
        final_node: state.node,
        terminated,
        detour_decisions: decisions,
    })
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

    fn placement(node: &str, rule: &str) -> SignPlacement {
        SignPlacement {
            node: NodeId::from(node),
            rule: RuleId::new(rule),
            facing: Facing::All,
            legibility: 1.0,
        }
    }

    struct Fixture {
        graph: NavGraph,
        catalog: crate::rules::RuleCatalog,
        constraints: ConstraintSet,
    }

    fn fixture(placements: &[SignPlacement]) -> Fixture {
        let mut graph = generate_grid(3, 3, 1.0, 0).unwrap();
        let catalog = demo_catalog();
        let constraints = resolve_constraints(&graph, &catalog, placements).unwrap();
        graph.inject_placements(placements).unwrap();
        Fixture { graph, catalog, constraints }
    }

    fn spec<'a>(fx: &'a Fixture, snrm: bool) -> RunSpec<'a> {
        static PERCEPTION: PerceptionConfig = PerceptionConfig {
            miss_rate: 0.0,
            false_alarm_rate: 0.0,
            misclass_rate: 0.0,
            legibility_gate: 0.0,
            seed: 7,
        };
        static PLANNER: PlannerConfig = PlannerConfig {
            backtrack_penalty: 5.0,
            critical_radius: 0.5,
            loop_similarity_threshold: 0.98,
            exit_radius: 0.5,
            max_detour_steps: 0,
        };
        RunSpec {
            graph: &fx.graph,
            catalog: &fx.catalog,
            constraints: &fx.constraints,
            perception: &PERCEPTION,
            planner: &PLANNER,
            snrm,
            ablation: AblationSetup::full(),
            seed: 42,
        }
    }

    #[test]
    fn unconstrained_snrm_is_pass_through() {
        let fx = fixture(&[]);
        let ep = episode(&fx.graph, &["r0c0", "r0c1", "r1c1", "r2c1", "r2c2"]);
        let plain = run_episode(&spec(&fx, false), &ep, PolicyKind::RouteFollower).unwrap();
        let wrapped = run_episode(&spec(&fx, true), &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(plain.terminated, TerminationReason::ReachedTarget);
        assert_eq!(wrapped.terminated, TerminationReason::ReachedTarget);
        let path = |r: &TrajectoryRecord| -> Vec<NodeId> {
            r.steps.iter().map(|s| s.to.clone()).collect()
        };
        assert_eq!(path(&plain), path(&wrapped));
        assert!(wrapped.steps.iter().all(|s| s.gt_mask));
    }

    #[test]
    fn blind_follower_executes_violations() {
        let fx = fixture(&[placement("r1c1", "no-left-turn")]);
        // Route turns left at the center: east into r1c1, then north.
        let ep = episode(&fx.graph, &["r1c0", "r1c1", "r2c1", "r2c2"]);
        let rec = run_episode(&spec(&fx, false), &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(rec.terminated, TerminationReason::ReachedTarget);
        let violations = rec.steps.iter().filter(|s| !s.gt_mask).count();
        assert_eq!(violations, 1);
    }

    #[test]
    fn snrm_detours_and_reaches_target_without_violations() {
        let fx = fixture(&[placement("r1c1", "no-left-turn")]);
        let ep = episode(&fx.graph, &["r1c0", "r1c1", "r2c1", "r2c2"]);
        let rec = run_episode(&spec(&fx, true), &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(rec.terminated, TerminationReason::ReachedTarget, "steps: {:#?}", rec.steps);
        assert!(rec.steps.iter().all(|s| s.gt_mask), "steps: {:#?}", rec.steps);
        // The first detour step must differ from the banned transition.
        let conflict_step = rec
            .steps
            .iter()
            .find(|s| s.verdict.starts_with("correct"))
            .expect("a correction must fire");
        assert_ne!(
            (conflict_step.from.clone(), conflict_step.to.clone()),
            (NodeId::from("r1c1"), NodeId::from("r2c1"))
        );
    }

    #[test]
    fn snrm_handles_banned_center_on_route() {
        let fx = fixture(&[placement("r1c1", "no-entry")]);
        let ep = episode(&fx.graph, &["r0c1", "r1c1", "r2c1", "r2c2"]);
        // Blind follower walks straight through, violating on exit from
        // the banned node.
        let blind = run_episode(&spec(&fx, false), &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(blind.terminated, TerminationReason::ReachedTarget);
        assert!(blind.steps.iter().any(|s| !s.gt_mask));
        // The wrapped agent never executes a violation; entering the
        // trap node is legal but exiting is not, so it may end stuck.
        let wrapped = run_episode(&spec(&fx, true), &ep, PolicyKind::RouteFollower).unwrap();
        assert!(wrapped.steps.iter().all(|s| s.gt_mask));
    }

    #[test]
    fn mental_map_ablation_stops_at_conflict() {
        let fx = fixture(&[placement("r1c1", "no-left-turn")]);
        let ep = episode(&fx.graph, &["r1c0", "r1c1", "r2c1", "r2c2"]);
        let mut s = spec(&fx, true);
        s.ablation = AblationSetup { mmvp: true, kdrg: true, mental_map: false };
        let rec = run_episode(&s, &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(rec.terminated, TerminationReason::StoppedAtConflict);
        assert!(rec.steps.iter().all(|s| s.gt_mask));
    }

    #[test]
    fn oracle_policy_never_violates() {
        let fx = fixture(&[placement("r1c1", "no-entry"), placement("r0c1", "no-left-turn")]);
        let ep = episode(&fx.graph, &["r0c0", "r0c1", "r1c1", "r2c1", "r2c2"]);
        let rec = run_episode(&spec(&fx, false), &ep, PolicyKind::CompliantOracle).unwrap();
        assert_eq!(rec.terminated, TerminationReason::ReachedTarget);
        assert!(rec.steps.iter().all(|s| s.gt_mask));
    }

    #[test]
    fn runs_are_deterministic() {
        let fx = fixture(&[placement("r1c1", "no-right-turn")]);
        let ep = episode(&fx.graph, &["r0c1", "r1c1", "r1c2", "r2c2"]);
        let mut noisy = spec(&fx, true);
        let perception = PerceptionConfig {
            miss_rate: 0.2,
            misclass_rate: 0.2,
            ..PerceptionConfig::noiseless(3)
        };
        noisy.perception = &perception;
        let a = run_episode(&noisy, &ep, PolicyKind::RouteFollower).unwrap();
        let b = run_episode(&noisy, &ep, PolicyKind::RouteFollower).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
