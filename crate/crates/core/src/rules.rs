//! The rule engine: rule catalog, discrete action vocabulary, sign
//! placements, and the resolution of placed signs into the edge and
//! turn-transition validity mask that yields the semantically pruned
//! traversal view.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{headings_close, turn_delta};
use crate::graph::{DirectedEdge, EdgeKey, NavGraph, NodeId};

/// Identifier of a rule category.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub String);

impl RuleId {
    pub fn new(id: impl Into<String>) -> Self {
        RuleId(id.into())
    }
}

impl std::fmt::Display for RuleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The global discrete action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscreteAction {
    Straight,
    Left,
    Right,
    UTurn,
}

impl DiscreteAction {
    pub const ALL: [DiscreteAction; 4] = [
        DiscreteAction::Straight,
        DiscreteAction::Left,
        DiscreteAction::Right,
        DiscreteAction::UTurn,
    ];
}

impl std::fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DiscreteAction::Straight => "straight",
            DiscreteAction::Left => "left",
            DiscreteAction::Right => "right",
            DiscreteAction::UTurn => "uturn",
        };
        f.write_str(s)
    }
}

/// Classify the turn from an arrival heading to a departure heading.
///
/// With the counter-clockwise-positive delta δ in (-π, π]:
/// |δ| ≤ π/6 is straight, δ in (π/6, 5π/6) left, δ in (-5π/6, -π/6)
/// right, and the remainder a U-turn. Total over all heading pairs.
pub fn classify_turn(arrival_heading: f64, departure_heading: f64) -> DiscreteAction {
    let delta = turn_delta(arrival_heading, departure_heading);
    let sixth = PI / 6.0;
    if delta.abs() <= sixth {
        DiscreteAction::Straight
    } else if delta > sixth && delta < 5.0 * sixth {
        DiscreteAction::Left
    } else if delta < -sixth && delta > -5.0 * sixth {
        DiscreteAction::Right
    } else {
        DiscreteAction::UTurn
    }
}

/// Constraint kind: a total prohibition of governed edges, or a
/// restriction of arrival-to-departure turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    EdgeBan,
    TurnRestriction,
}

/// A rule category: visual descriptor, semantic imperative, and the
/// permissible action subspace it leaves open.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RuleCategory {
    pub id: RuleId,
    pub visual_descriptor: String,
    pub semantic_imperative: String,
    pub kind: RuleKind,
    pub permissible_actions: BTreeSet<DiscreteAction>,
}

/// The rule catalog, keyed by rule id.
#[derive(Clone, Debug)]
pub struct RuleCatalog {
    categories: BTreeMap<RuleId, RuleCategory>,
}

impl RuleCatalog {
    pub fn new(categories: Vec<RuleCategory>) -> Result<RuleCatalog> {
        if categories.is_empty() {
            return Err(Error::Validation("catalog has no categories".into()));
        }
        let mut map = BTreeMap::new();
        for cat in categories {
            validate_category(&cat)?;
            let id = cat.id.clone();
            if map.insert(id.clone(), cat).is_some() {
                return Err(Error::Validation(format!("duplicate rule id `{id}`")));
            }
        }
        Ok(RuleCatalog { categories: map })
    }

    pub fn get(&self, id: &RuleId) -> Result<&RuleCategory> {
        self.categories.get(id).ok_or_else(|| Error::UnknownRule(id.0.clone()))
    }

    pub fn contains(&self, id: &RuleId) -> bool {
        self.categories.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Categories in deterministic (sorted-id) order.
    pub fn categories(&self) -> impl Iterator<Item = &RuleCategory> {
        self.categories.values()
    }
}

fn validate_category(cat: &RuleCategory) -> Result<()> {
    if cat.kind == RuleKind::TurnRestriction {
        if cat.permissible_actions.is_empty() {
            return Err(Error::Validation(format!(
                "turn restriction `{}` permits no actions",
                cat.id
            )));
        }
        if cat.permissible_actions.len() == DiscreteAction::ALL.len() {
            return Err(Error::Validation(format!(
                "turn restriction `{}` permits every action and constrains nothing",
                cat.id
            )));
        }
    }
    Ok(())
}

/// Which arrival heading a sign governs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Facing {
    All,
    Heading(f64),
}

impl Facing {
    /// Whether this facing governs the given heading, within `tol` radians.
    pub fn governs(&self, heading: f64, tol: f64) -> bool {
        match self {
            Facing::All => true,
            Facing::Heading(f) => headings_close(*f, heading, tol),
        }
    }
}

impl Serialize for Facing {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Facing::All => ser.serialize_str("all"),
            Facing::Heading(h) => ser.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Facing {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Angle(f64),
            Word(String),
        }
        match Repr::deserialize(de)? {
            Repr::Word(w) if w == "all" => Ok(Facing::All),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "facing must be \"all\" or an angle in [0, 2π), got \"{w}\""
            ))),
            Repr::Angle(a) => {
                if !a.is_finite() || !(0.0..std::f64::consts::TAU).contains(&a) {
                    Err(serde::de::Error::custom(format!(
                        "facing angle {a} outside [0, 2π); normalize before writing"
                    )))
                } else {
                    Ok(Facing::Heading(a))
                }
            }
        }
    }
}

/// A sign placed at a node, governing a given arrival/departure heading
/// (or all of them) with some legibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignPlacement {
    pub node: NodeId,
    pub rule: RuleId,
    pub facing: Facing,
    pub legibility: f64,
}

/// Resolved constraints: the binary validity mask over edges and
/// turn transitions, derived deterministically from placements.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    pub forbidden_edges: BTreeSet<EdgeKey>,
    pub forbidden_transitions: BTreeSet<(EdgeKey, EdgeKey)>,
    pub source_placements: Vec<SignPlacement>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.forbidden_edges.is_empty() && self.forbidden_transitions.is_empty()
    }

    /// The validity mask: false (0) iff the outgoing edge is banned or
    /// the (in, out) transition is forbidden. At episode start (no
    /// in-edge) only edge bans apply.
    pub fn mask(&self, in_edge: Option<&EdgeKey>, out_edge: &EdgeKey) -> bool {
        if self.forbidden_edges.contains(out_edge) {
            return false;
        }
        if let Some(in_edge) = in_edge {
            if self.forbidden_transitions.contains(&(in_edge.clone(), out_edge.clone())) {
                return false;
            }
        }
        true
    }

    /// Nodes carrying at least one placement.
    pub fn constrained_nodes(&self) -> BTreeSet<NodeId> {
        self.source_placements.iter().map(|p| p.node.clone()).collect()
    }
}

/// Resolve sign placements into the constraint set.
///
/// An edge ban at node v forbids every outgoing edge of v whose heading
/// the sign's facing governs (facing `All` governs them all). A turn
/// restriction at v forbids each transition (e_in, e_out) through v whose
/// turn class falls outside the rule's permissible actions, for arrivals
/// the facing governs. Facing tolerance is ±π/K, half a slice.
pub fn resolve_constraints(
    graph: &NavGraph,
    catalog: &RuleCatalog,
    placements: &[SignPlacement],
) -> Result<ConstraintSet> {
    let tol = PI / graph.slice_count() as f64;
    let mut set = ConstraintSet {
        source_placements: placements.to_vec(),
        ..ConstraintSet::default()
    };
    for placement in placements {
        let category = catalog.get(&placement.rule)?;
        let outgoing: Vec<&DirectedEdge> = graph.outgoing(&placement.node)?.collect();
        match category.kind {
            RuleKind::EdgeBan => {
                for edge in &outgoing {
                    if placement.facing.governs(edge.heading, tol) {
                        set.forbidden_edges.insert(edge.key());
                    }
                }
            }
            RuleKind::TurnRestriction => {
                for out_edge in &outgoing {
                    // Bidirectional graphs: arrivals are reverses of departures.
                    let in_key = out_edge.key().reversed();
                    let in_edge = graph.edge(&in_key)?;
                    if !placement.facing.governs(in_edge.heading, tol) {
                        continue;
                    }
                    for departure in &outgoing {
                        let action = classify_turn(in_edge.heading, departure.heading);
                        if !category.permissible_actions.contains(&action) {
                            set.forbidden_transitions.insert((in_key.clone(), departure.key()));
                        }
                    }
                }
            }
        }
    }
    Ok(set)
}

/// A traversal view of the graph in which successor enumeration filters
/// by the validity mask. The node set and underlying graph are untouched.
#[derive(Clone, Copy)]
pub struct PrunedGraph<'a> {
    graph: &'a NavGraph,
    constraints: &'a ConstraintSet,
}

impl<'a> PrunedGraph<'a> {
    pub fn new(graph: &'a NavGraph, constraints: &'a ConstraintSet) -> Self {
        PrunedGraph { graph, constraints }
    }

    pub fn graph(&self) -> &'a NavGraph {
        self.graph
    }

    pub fn constraints(&self) -> &'a ConstraintSet {
        self.constraints
    }

    /// Mask-surviving outgoing edges given the arrival edge (None at
    /// episode start).
    pub fn successors(
        &self,
        at: &NodeId,
        in_edge: Option<&EdgeKey>,
    ) -> Result<Vec<&'a DirectedEdge>> {
        Ok(self
            .graph
            .outgoing(at)?
            .filter(|e| self.constraints.mask(in_edge, &e.key()))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    categories: Vec<RuleCategory>,
}

/// Load and validate a rule catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<RuleCatalog> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let file: CatalogFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    RuleCatalog::new(file.categories)
}

/// Save a catalog file (the exact format `load_catalog` reads).
pub fn save_catalog(catalog: &RuleCatalog, path: impl AsRef<Path>) -> Result<()> {
    let file = CatalogFile { categories: catalog.categories().cloned().collect() };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// A per-level constraint/placement file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelFile {
    pub level: u8,
    pub placements: Vec<SignPlacement>,
}

/// Load a constraint/placement file. Placement node and rule references
/// are validated later, against the graph and catalog they are used with.
pub fn load_level(path: impl AsRef<Path>) -> Result<LevelFile> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let file: LevelFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    for p in &file.placements {
        if !(0.0..=1.0).contains(&p.legibility) {
            return Err(Error::Validation(format!(
                "placement at `{}` has legibility {} outside [0, 1]",
                p.node, p.legibility
            )));
        }
    }
    Ok(file)
}

pub fn save_level(level: &LevelFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(level)?)?;
    Ok(())
}

fn turn_category(id: &str, visual: &str, imperative: &str, allowed: &[DiscreteAction]) -> RuleCategory {
    RuleCategory {
        id: RuleId::new(id),
        visual_descriptor: visual.to_string(),
        semantic_imperative: imperative.to_string(),
        kind: RuleKind::TurnRestriction,
        permissible_actions: allowed.iter().copied().collect(),
    }
}

/// Turn-restriction-only catalog. Every category keeps at least one
/// action available from any arrival on a lattice, so benchmarks built
/// from it never trap an agent outright — the right catalog for
/// completion-sensitive evaluations.
pub fn turn_restriction_catalog() -> RuleCatalog {
    use DiscreteAction::*;
    RuleCatalog::new(vec![
        turn_category("no-left-turn", "Red Circle, Left Arrow Crossed", "No Left Turn", &[Straight, Right, UTurn]),
        turn_category("no-right-turn", "Red Circle, Right Arrow Crossed", "No Right Turn", &[Straight, Left, UTurn]),
        turn_category("no-uturn", "Red Circle, U Arrow Crossed", "No U-Turn", &[Straight, Left, Right]),
    ])
    .expect("turn catalog is valid")
}

/// A small built-in catalog of turn restrictions plus one edge ban,
/// convenient for tests and demos. Edge bans on a facing-All placement
/// make the node a one-way trap (enterable, not leavable), so prefer
/// [`turn_restriction_catalog`] when generating completion-sensitive
/// benchmarks.
pub fn demo_catalog() -> RuleCatalog {
    use DiscreteAction::*;
    RuleCatalog::new(vec![
        turn_category("no-left-turn", "Red Circle, Left Arrow Crossed", "No Left Turn", &[Straight, Right, UTurn]),
        turn_category("no-right-turn", "Red Circle, Right Arrow Crossed", "No Right Turn", &[Straight, Left, UTurn]),
        turn_category("no-uturn", "Red Circle, U Arrow Crossed", "No U-Turn", &[Straight, Left, Right]),
        RuleCategory {
            id: RuleId::new("no-entry"),
            visual_descriptor: "Red Circle, White Bar".to_string(),
            semantic_imperative: "No Entry".to_string(),
            kind: RuleKind::EdgeBan,
            permissible_actions: BTreeSet::new(),
        },
    ])
    .expect("demo catalog is valid")
}
