//! rulenav-core: a discrete-graph navigation simulator and benchmark
//! toolkit for rule-constrained navigation.
//!
//! The crate models street-style graphs whose edges are geometrically
//! traversable but may be semantically forbidden by placed signs. It
//! provides the rule engine that resolves signs into a transition
//! validity mask, benchmark construction via node-criticality curricula,
//! a simulated two-stage perception stack, a rectification layer that
//! keeps arbitrary base policies rule-compliant via mental-map detours,
//! a constrained shortest-path oracle, and the evaluation harness with
//! task-completion / path-distance / violation-rate metrics.

pub mod bench_gen;
pub mod error;
pub mod eval;
pub mod geom;
pub mod gmm;
pub mod graph;
pub mod perception;
pub mod planner;
pub mod rules;

pub use error::{Error, Result};
pub use eval::{
    compliant_shortest_path, compute_metrics, load_episodes, run_episode, AblationSetup, Episode,
    MetricsReport, PolicyKind, ReportRow, TerminationReason, TrajectoryRecord,
};
pub use geom::Vec2;
pub use graph::{
    generate_grid, generate_grid_jittered, generate_random_connected, load_graph, save_graph,
    DirectedEdge, EdgeKey, NavGraph, Node, NodeId, Observation, SliceView,
};
pub use perception::{PerceptionConfig, SafetyToken, SafetyVerdict};
pub use planner::{AgentState, MentalMap, PlannerConfig};
pub use rules::{
    classify_turn, load_catalog, resolve_constraints, ConstraintSet, DiscreteAction, Facing,
    PrunedGraph, RuleCatalog, RuleCategory, RuleId, RuleKind, SignPlacement,
};

/// Cap the global worker pool (e.g. from an environment variable). Only
/// the first call can take effect; later calls are ignored.
pub fn set_thread_cap(threads: usize) {
    if threads == 0 {
        return;
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}
