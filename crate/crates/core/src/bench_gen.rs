//! Benchmark construction: node-criticality scoring (degree centrality,
//! betweenness, path dependence, path frequency), curriculum level
//! assembly against coverage targets, and route/level file I/O.

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NavGraph, NodeId};
use crate::rules::{Facing, LevelFile, RuleCatalog, SignPlacement};

/// A gold route: the desk-scale abstraction of a navigation instruction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub nodes: Vec<NodeId>,
    pub target: NodeId,
}

impl Route {
    /// Check the route is a walk in the graph ending at its target.
    pub fn validate(&self, graph: &NavGraph) -> Result<()> {
        let fail = |reason: String| Error::InvalidRoute { id: self.id.clone(), reason };
        if self.nodes.len() < 2 {
            return Err(fail("route needs at least two nodes".into()));
        }
        if self.nodes.last() != Some(&self.target) {
            return Err(fail(format!("target `{}` is not the last node", self.target)));
        }
        for pair in self.nodes.windows(2) {
            if !graph.adjacent(&pair[0], &pair[1]) {
                return Err(fail(format!("`{}` and `{}` are not adjacent", pair[0], pair[1])));
            }
        }
        Ok(())
    }
}

/// Load a routes file: a JSON list of `{id, nodes, target}`.
pub fn load_routes(path: impl AsRef<Path>) -> Result<Vec<Route>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

pub fn save_routes(routes: &[Route], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(routes)?)?;
    Ok(())
}

/// Generate seeded random shortest-path routes of at least `min_hops`.
///
/// Route endpoints are drawn from a small seeded pool of depot nodes
/// rather than the whole graph, leaving plenty of non-endpoint interior
/// nodes for constraint injection.
pub fn generate_routes(
    graph: &NavGraph,
    count: usize,
    min_hops: usize,
    seed: u64,
) -> Result<Vec<Route>> {
    use rand::seq::SliceRandom;
    let ids: Vec<&NodeId> = graph.node_ids().collect();
    if ids.len() < 2 {
        return Err(Error::Dimension("route generation needs at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool_size = (ids.len() / 8).clamp(8, 40).min(ids.len() / 2).max(2);
    let mut depots: Vec<&NodeId> = ids.clone();
    depots.shuffle(&mut rng);
    depots.truncate(pool_size);
    depots.sort();
    let mut routes = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let mut dist_cache: BTreeMap<NodeId, BTreeMap<NodeId, usize>> = BTreeMap::new();
    while routes.len() < count {
        attempts += 1;
        if attempts > count.saturating_mul(200) + 200 {
            return Err(Error::Validation(format!(
                "could not find {count} routes with >= {min_hops} hops; graph too small"
            )));
        }
        let start = depots[rng.random_range(0..depots.len())].clone();
        let target = depots[rng.random_range(0..depots.len())].clone();
        if start == target {
            continue;
        }
        let dist_to_target = match dist_cache.get(&target) {
            Some(d) => d,
            None => {
                let d = graph.hop_distances(&target)?;
                dist_cache.entry(target.clone()).or_insert(d)
            }
        };
        let Some(&d) = dist_to_target.get(&start) else { continue };
        if d < min_hops {
            continue;
        }
        // Walk downhill on the distance field, breaking ties at random:
        // a uniform sample among a subset of the shortest paths.
        let mut nodes = vec![start.clone()];
        let mut at = start;
        while at != target {
            let d_at = dist_to_target[&at];
            let next_opts: Vec<NodeId> = graph
                .outgoing(&at)?
                .filter(|e| dist_to_target.get(&e.to).map_or(false, |&dn| dn + 1 == d_at))
                .map(|e| e.to.clone())
                .collect();
            let next = next_opts[rng.random_range(0..next_opts.len())].clone();
            nodes.push(next.clone());
            at = next;
        }
        routes.push(Route {
            id: format!("ep{:04}", routes.len()),
            nodes,
            target,
        });
    }
    Ok(routes)
}

/// Out-degree divided by |V| - 1.
pub fn degree_centrality(graph: &NavGraph) -> Result<BTreeMap<NodeId, f64>> {
    let n = graph.node_count();
    if n < 2 {
        return Err(Error::Dimension("degree centrality needs at least two nodes".into()));
    }
    Ok(graph
        .node_ids()
        .map(|id| (id.clone(), graph.out_degree(id) as f64 / (n - 1) as f64))
        .collect())
}

/// Normalized betweenness centrality, Brandes' algorithm for directed
/// unweighted graphs; divisor (|V|-1)(|V|-2).
pub fn betweenness_centrality(graph: &NavGraph) -> BTreeMap<NodeId, f64> {
    let ids: Vec<&NodeId> = graph.node_ids().collect();
    let n = ids.len();
    let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let adj: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| graph.outgoing(id).expect("known node").map(|e| index[&e.to]).collect())
        .collect();

    let mut score = vec![0.0f64; n];
    if n > 2 {
        for s in 0..n {
            let mut stack: Vec<usize> = Vec::with_capacity(n);
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut sigma = vec![0.0f64; n];
            let mut dist = vec![-1i64; n];
            sigma[s] = 1.0;
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                stack.push(v);
                for &w in &adj[v] {
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0f64; n];
            while let Some(w) = stack.pop() {
                for &v in &preds[w] {
                    delta[v] += (sigma[v] / sigma[w]) * (1.0 + delta[w]);
                }
                if w != s {
                    score[w] += delta[w];
                }
            }
        }
        let norm = 1.0 / ((n - 1) * (n - 2)) as f64;
        for v in &mut score {
            *v *= norm;
        }
    }
    ids.into_iter().cloned().zip(score).collect()
}

/// Reference betweenness by explicit enumeration of every shortest path.
/// Exponential; intended as the independent check for small graphs.
pub fn brute_force_betweenness(graph: &NavGraph) -> BTreeMap<NodeId, f64> {
    let ids: Vec<NodeId> = graph.node_ids().cloned().collect();
    let n = ids.len();
    let mut through: BTreeMap<NodeId, f64> = ids.iter().map(|id| (id.clone(), 0.0)).collect();
    if n > 2 {
        for s in &ids {
            let dist = graph.hop_distances(s).expect("known node");
            for t in &ids {
                if t == s || !dist.contains_key(t) {
                    continue;
                }
                let mut paths: Vec<Vec<NodeId>> = Vec::new();
                let mut partial = vec![t.clone()];
                enumerate_shortest(graph, &dist, s, t, &mut partial, &mut paths);
                let total = paths.len() as f64;
                for path in &paths {
                    for v in &path[1..path.len() - 1] {
                        *through.get_mut(v).unwrap() += 1.0 / total;
                    }
                }
            }
        }
        let norm = 1.0 / ((n - 1) * (n - 2)) as f64;
        for v in through.values_mut() {
            *v *= norm;
        }
    }
    through
}

/// Extend a reversed partial path from `cur` back toward `s` along the
/// BFS distance field, collecting completed shortest paths.
fn enumerate_shortest(
    graph: &NavGraph,
    dist_from_s: &BTreeMap<NodeId, usize>,
    s: &NodeId,
    cur: &NodeId,
    partial: &mut Vec<NodeId>,
    out: &mut Vec<Vec<NodeId>>,
) {
    if cur == s {
        let mut path = partial.clone();
        path.reverse();
        out.push(path);
        return;
    }
    let d = dist_from_s[cur];
    for edge in graph.outgoing(cur).expect("known node") {
        // Bidirectional graphs: predecessors of cur are successors whose
        // distance is one less.
        if dist_from_s.get(&edge.to) == Some(&(d - 1)) {
            partial.push(edge.to.clone());
            enumerate_shortest(graph, dist_from_s, s, &edge.to, partial, out);
            partial.pop();
        }
    }
}

/// Capped relative detour inflation when `node` is removed, averaged over
/// seeded sample pairs; disconnected pairs contribute the cap. In [0, 1].
pub fn path_dependence(
    graph: &NavGraph,
    node: &NodeId,
    sample_pairs: usize,
    cap: f64,
    seed: u64,
) -> Result<f64> {
    if !graph.contains_node(node) {
        return Err(Error::UnknownNode(node.clone()));
    }
    if sample_pairs == 0 {
        return Err(Error::Dimension("sample_pairs must be >= 1".into()));
    }
    if cap <= 0.0 {
        return Err(Error::Dimension("path-dependence cap must be positive".into()));
    }
    let others: Vec<&NodeId> = graph.node_ids().filter(|id| *id != node).collect();
    if others.len() < 2 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut cache: BTreeMap<NodeId, (BTreeMap<NodeId, usize>, BTreeMap<NodeId, usize>)> =
        BTreeMap::new();
    for _ in 0..sample_pairs {
        let s = others[rng.random_range(0..others.len())];
        let t = others[rng.random_range(0..others.len())];
        if s == t {
            continue;
        }
        let (full, without) = cache.entry(s.clone()).or_insert_with(|| {
            (
                graph.hop_distances(s).expect("known node"),
                graph.hop_distances_excluding(s, node).expect("known node"),
            )
        });
        let Some(&base) = full.get(t) else { continue };
        counted += 1;
        let term = match without.get(t) {
            None => cap,
            Some(&detour) => {
                let inflation = (detour as f64 - base as f64) / base as f64;
                inflation.min(cap)
            }
        };
        sum += term / cap;
    }
    if counted == 0 {
        return Ok(0.0);
    }
    Ok(sum / counted as f64)
}

/// Fraction of routes containing each node strictly in their interior.
pub fn path_frequency(graph: &NavGraph, routes: &[Route]) -> Result<BTreeMap<NodeId, f64>> {
    if routes.is_empty() {
        return Err(Error::Validation("path frequency needs at least one route".into()));
    }
    let mut counts: BTreeMap<NodeId, usize> = graph.node_ids().map(|id| (id.clone(), 0)).collect();
    for route in routes {
        route.validate(graph)?;
        let interior: std::collections::BTreeSet<&NodeId> =
            route.nodes[1..route.nodes.len() - 1].iter().collect();
        for node in interior {
            *counts
                .get_mut(node)
                .ok_or_else(|| Error::UnknownNode(node.clone()))? += 1;
        }
    }
    let n = routes.len() as f64;
    Ok(counts.into_iter().map(|(id, c)| (id, c as f64 / n)).collect())
}

/// Per-node criticality: the four component metrics and their aggregate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalityScore {
    pub node: NodeId,
    pub degree: f64,
    pub betweenness: f64,
    pub path_dependence: f64,
    pub path_frequency: f64,
    pub aggregate: f64,
}

/// Aggregation weights; must be non-negative and sum to 1.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricWeights {
    pub degree: f64,
    pub betweenness: f64,
    pub path_dependence: f64,
    pub path_frequency: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights { degree: 0.25, betweenness: 0.25, path_dependence: 0.25, path_frequency: 0.25 }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.degree, self.betweenness, self.path_dependence, self.path_frequency];
        if parts.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Validation("metric weights must be non-negative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("metric weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Benchmark generator configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub weights: MetricWeights,
    /// Affected-instruction coverage targets for levels 1..4, strictly
    /// increasing fractions.
    pub coverage_targets: [f64; 4],
    pub node_budget_per_level: usize,
    /// Cap on relative detour inflation in the path-dependence metric.
    pub disconnection_cap: f64,
    pub sample_pairs: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            weights: MetricWeights::default(),
            coverage_targets: [0.3144, 0.5479, 0.7452, 0.9113],
            node_budget_per_level: 60,
            disconnection_cap: 2.0,
            sample_pairs: 64,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        for w in self.coverage_targets.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(
                    "coverage targets must be strictly increasing".into(),
                ));
            }
        }
        if self.coverage_targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Validation("coverage targets must lie in [0, 1]".into()));
        }
        if self.sample_pairs == 0 {
            return Err(Error::Validation("sample_pairs must be >= 1".into()));
        }
        if self.disconnection_cap <= 0.0 {
            return Err(Error::Validation("disconnection_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Load a generator config file (JSON mirroring [`GenConfig`]).
pub fn load_gen_config(path: impl AsRef<Path>) -> Result<GenConfig> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let cfg: GenConfig = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Compute all criticality scores, sorted by aggregate descending
/// (ties by node id). Path dependence runs in parallel per node with
/// per-node seeded streams, so the result is scheduling-independent.
pub fn criticality_scores(
    graph: &NavGraph,
    routes: &[Route],
    config: &GenConfig,
) -> Result<Vec<CriticalityScore>> {
    config.validate()?;
    let degree = degree_centrality(graph)?;
    let betweenness = betweenness_centrality(graph);
    let frequency = path_frequency(graph, routes)?;
    let ids: Vec<NodeId> = graph.node_ids().cloned().collect();
    let dependence: Vec<f64> = ids
        .par_iter()
        .map(|id| {
            let node_seed = mix_seed(config.seed, id.as_str());
            path_dependence(graph, id, config.sample_pairs, config.disconnection_cap, node_seed)
        })
        .collect::<Result<_>>()?;
    let w = config.weights;
    let mut scores: Vec<CriticalityScore> = ids
        .into_iter()
        .zip(dependence)
        .map(|(node, dep)| {
            let deg = degree[&node];
            let btw = betweenness[&node];
            let freq = frequency[&node];
            CriticalityScore {
                degree: deg,
                betweenness: btw,
                path_dependence: dep,
                path_frequency: freq,
                aggregate: w.degree * deg
                    + w.betweenness * btw
                    + w.path_dependence * dep
                    + w.path_frequency * freq,
                node,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.aggregate
            .partial_cmp(&a.aggregate)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.node.cmp(&b.node))
    });
    Ok(scores)
}

fn mix_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, folded with the base seed.
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// One curriculum difficulty level and its achieved coverage.
#[derive(Clone, Debug)]
pub struct CurriculumLevel {
    pub level: u8,
    pub placements: Vec<SignPlacement>,
    pub affected_node_fraction: f64,
    pub affected_instruction_fraction: f64,
    pub coverage_target: f64,
    /// True when the node budget (or candidate pool) ran out before the
    /// coverage target was within tolerance.
    pub budget_exhausted: bool,
}

/// Coverage tolerance around each target, in absolute fraction.
pub const COVERAGE_TOLERANCE: f64 = 0.05;

/// Fraction of routes passing through at least one of the given nodes.
pub fn affected_instruction_fraction(
    routes: &[Route],
    nodes: &std::collections::BTreeSet<NodeId>,
) -> f64 {
    if routes.is_empty() {
        return 0.0;
    }
    let hit = routes
        .iter()
        .filter(|r| r.nodes.iter().any(|n| nodes.contains(n)))
        .count();
    hit as f64 / routes.len() as f64
}

/// Build the four curriculum levels.
///
/// Candidate nodes (never route endpoints) are ranked by aggregate
/// criticality; the highest-ranked go to the highest level. Each level
/// greedily consumes ranked nodes — skipping any that would overshoot
/// its target by more than the tolerance — until its affected-instruction
/// fraction is within tolerance of the target or the budget runs out.
/// Levels draw from disjoint node pools.
pub fn build_levels(
    graph: &NavGraph,
    routes: &[Route],
    catalog: &RuleCatalog,
    config: &GenConfig,
) -> Result<Vec<CurriculumLevel>> {
    config.validate()?;
    if routes.is_empty() {
        return Err(Error::Validation("benchmark generation needs routes".into()));
    }
    let scores = criticality_scores(graph, routes, config)?;
    let endpoints: std::collections::BTreeSet<&NodeId> = routes
        .iter()
        .flat_map(|r| [&r.nodes[0], &r.target])
        .collect();
    let mut pool: Vec<&CriticalityScore> =
        scores.iter().filter(|s| !endpoints.contains(&s.node)).collect();
    if pool.is_empty() {
        return Err(Error::Validation(
            "no non-endpoint candidate nodes available for injection".into(),
        ));
    }

    // Route indices through each candidate, precomputed once.
    let mut routes_through: BTreeMap<&NodeId, Vec<usize>> = BTreeMap::new();
    for (idx, route) in routes.iter().enumerate() {
        for node in &route.nodes {
            routes_through.entry(node).or_default().push(idx);
        }
    }

    let categories: Vec<&crate::rules::RuleCategory> = catalog.categories().collect();
    let n_routes = routes.len();
    let mut levels: Vec<CurriculumLevel> = Vec::with_capacity(4);
    // Highest scores go to the highest level: build 4 down to 1.
    for level_idx in (0..4usize).rev() {
        let level_no = (level_idx + 1) as u8;
        let target = config.coverage_targets[level_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &format!("level-{level_no}")));
        let mut chosen: Vec<&CriticalityScore> = Vec::new();
        let mut covered = vec![false; n_routes];
        let mut fraction = 0.0f64;
        let mut budget_exhausted = false;

        let mut remaining: Vec<&CriticalityScore> = Vec::with_capacity(pool.len());
        let mut cursor = pool.iter();
        while fraction < target - COVERAGE_TOLERANCE {
            if chosen.len() >= config.node_budget_per_level {
                budget_exhausted = true;
                break;
            }
            let Some(candidate) = cursor.next() else {
                budget_exhausted = true;
                break;
            };
            let gain = routes_through
                .get(&candidate.node)
                .map_or(0, |idxs| idxs.iter().filter(|&&i| !covered[i]).count());
            // Coverage gain is level-local: a node redundant here may be
            // exactly what a lower level needs, so never consume it idly.
            let next_fraction = fraction + gain as f64 / n_routes as f64;
            if gain == 0 || next_fraction > target + COVERAGE_TOLERANCE {
                remaining.push(candidate);
                continue;
            }
            if let Some(idxs) = routes_through.get(&candidate.node) {
                for &i in idxs {
                    covered[i] = true;
                }
            }
            fraction = next_fraction;
            chosen.push(candidate);
        }
        remaining.extend(cursor.copied());
        pool = remaining;

        if chosen.is_empty() && fraction < target - COVERAGE_TOLERANCE {
            return Err(Error::InfeasibleTarget { level: level_no, achieved: fraction, target });
        }

        let placements: Vec<SignPlacement> = chosen
            .iter()
            .map(|score| SignPlacement {
                node: score.node.clone(),
                rule: categories.choose(&mut rng).expect("catalog non-empty").id.clone(),
                facing: Facing::All,
                legibility: 1.0,
            })
            .collect();
        let nodes: std::collections::BTreeSet<NodeId> =
            placements.iter().map(|p| p.node.clone()).collect();
        levels.push(CurriculumLevel {
            level: level_no,
            affected_node_fraction: nodes.len() as f64 / graph.node_count() as f64,
            affected_instruction_fraction: affected_instruction_fraction(routes, &nodes),
            coverage_target: target,
            budget_exhausted,
            placements,
        });
    }
    levels.reverse();
    Ok(levels)
}

/// Write one level as a constraint/placement file.
pub fn emit_level(level: &CurriculumLevel, path: impl AsRef<Path>) -> Result<()> {
    let file = LevelFile { level: level.level, placements: level.placements.clone() };
    crate::rules::save_level(&file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_grid, generate_random_connected, NavGraph};
    use crate::geom::Vec2;
    use crate::rules::demo_catalog;
    use approx::assert_abs_diff_eq;

    fn star5() -> NavGraph {
        // Center `c` with 4 leaves.
        let nodes = vec![
            (NodeId::from("c"), Vec2::new(0.0, 0.0)),
            (NodeId::from("l1"), Vec2::new(1.0, 0.0)),
            (NodeId::from("l2"), Vec2::new(-1.0, 0.0)),
            (NodeId::from("l3"), Vec2::new(0.0, 1.0)),
            (NodeId::from("l4"), Vec2::new(0.0, -1.0)),
        ];
        let edges = ["l1", "l2", "l3", "l4"]
            .iter()
            .map(|l| (NodeId::from("c"), NodeId::from(*l), 1.0))
            .collect();
        NavGraph::from_undirected(8, nodes, edges).unwrap()
    }

    fn path3() -> NavGraph {
        let nodes = vec![
            (NodeId::from("a"), Vec2::new(0.0, 0.0)),
            (NodeId::from("b"), Vec2::new(1.0, 0.0)),
            (NodeId::from("c"), Vec2::new(2.0, 0.0)),
        ];
        let edges = vec![
            (NodeId::from("a"), NodeId::from("b"), 1.0),
            (NodeId::from("b"), NodeId::from("c"), 1.0),
        ];
        NavGraph::from_undirected(8, nodes, edges).unwrap()
    }

    #[test]
    fn degree_centrality_examples() {
        let star = star5();
        let d = degree_centrality(&star).unwrap();
        assert_abs_diff_eq!(d[&NodeId::from("c")], 1.0);
        assert_abs_diff_eq!(d[&NodeId::from("l1")], 0.25);
        let grid = generate_grid(3, 3, 1.0, 0).unwrap();
        let d = degree_centrality(&grid).unwrap();
        assert_abs_diff_eq!(d[&NodeId::from("r1c1")], 0.5);
    }

    #[test]
    fn betweenness_examples() {
        let b = betweenness_centrality(&path3());
        assert_abs_diff_eq!(b[&NodeId::from("b")], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[&NodeId::from("a")], 0.0, epsilon = 1e-12);
        let b = betweenness_centrality(&star5());
        assert_abs_diff_eq!(b[&NodeId::from("c")], 1.0, epsilon = 1e-12);
        // 4-cycle: all nodes equal by symmetry.
        let grid = generate_grid(2, 2, 1.0, 0).unwrap();
        let b = betweenness_centrality(&grid);
        let vals: Vec<f64> = b.values().copied().collect();
        for v in &vals {
            assert_abs_diff_eq!(*v, vals[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn betweenness_matches_brute_force_on_random_graphs() {
        for seed in 0..10 {
            let g = generate_random_connected(4 + (seed as usize % 9), 3, seed).unwrap();
            let fast = betweenness_centrality(&g);
            let slow = brute_force_betweenness(&g);
            for (id, v) in &fast {
                assert_abs_diff_eq!(*v, slow[id], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn path_dependence_examples() {
        // 4-cycle: removing any node leaves equal-length detours for the
        // remaining pairs that stay connected and adjacent around the ring?
        // The spec's cases: cycle pair keeps distance (contribution 0);
        // path graph disconnects (contribution 1).
        let grid = generate_grid(2, 2, 1.0, 0).unwrap();
        // 2x2 grid is the 4-cycle. Removing r0c1 leaves pairs among the
        // other three connected via the longer arc.
        let score = path_dependence(&grid, &NodeId::from("r0c1"), 64, 2.0, 1).unwrap();
        // (r0c0, r1c1): base 2, detour 2 -> 0. (r0c0, r1c0): base 1 stays 1.
        // Some pairs inflate (r1c0 to r1c1 stays 1... all pairs keep their
        // distance on the remaining path of length 3 except (r0c0,r1c1)
        // which keeps 2. So the score is 0.
        assert_abs_diff_eq!(score, 0.0, epsilon = 1e-12);

        let p = path3();
        let score = path_dependence(&p, &NodeId::from("b"), 64, 2.0, 1).unwrap();
        // Only pair set {a, c}, disconnected after removal: capped -> 1.
        assert_abs_diff_eq!(score, 1.0, epsilon = 1e-12);

        // Leaf removal never lengthens paths among the others.
        let star = star5();
        let score = path_dependence(&star, &NodeId::from("l1"), 64, 2.0, 1).unwrap();
        assert_abs_diff_eq!(score, 0.0, epsilon = 1e-12);

        assert!(path_dependence(&p, &NodeId::from("zz"), 8, 2.0, 1).is_err());
    }

    fn route(id: &str, nodes: &[&str]) -> Route {
        Route {
            id: id.into(),
            nodes: nodes.iter().map(|n| NodeId::from(*n)).collect(),
            target: NodeId::from(*nodes.last().unwrap()),
        }
    }

    #[test]
    fn path_frequency_counts_interiors() {
        let g = path3();
        let routes = vec![route("r1", &["a", "b", "c"]), route("r2", &["c", "b", "a"])];
        let f = path_frequency(&g, &routes).unwrap();
        assert_abs_diff_eq!(f[&NodeId::from("b")], 1.0);
        assert_abs_diff_eq!(f[&NodeId::from("a")], 0.0);
        let bad = vec![route("r3", &["a", "c"])];
        assert!(matches!(path_frequency(&g, &bad), Err(Error::InvalidRoute { .. })));
    }

    #[test]
    fn route_generation_is_deterministic_and_valid() {
        let g = generate_grid(6, 6, 1.0, 0).unwrap();
        let a = generate_routes(&g, 20, 4, 11).unwrap();
        let b = generate_routes(&g, 20, 4, 11).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.nodes, rb.nodes);
            ra.validate(&g).unwrap();
            assert!(ra.nodes.len() >= 5);
            // Shortest path: hop count equals BFS distance.
            let d = g.hop_distances(&ra.nodes[0]).unwrap();
            assert_eq!(d[&ra.target], ra.nodes.len() - 1);
        }
    }

    #[test]
    fn build_levels_monotone_on_grid() {
        let g = generate_grid(8, 8, 1.0, 0).unwrap();
        let routes = generate_routes(&g, 60, 4, 5).unwrap();
        let catalog = demo_catalog();
        let config = GenConfig { node_budget_per_level: 16, ..GenConfig::default() };
        let levels = build_levels(&g, &routes, &catalog, &config).unwrap();
        assert_eq!(levels.len(), 4);
        for w in levels.windows(2) {
            assert!(
                w[1].affected_instruction_fraction > w[0].affected_instruction_fraction,
                "fractions must strictly increase: {:?}",
                levels.iter().map(|l| l.affected_instruction_fraction).collect::<Vec<_>>()
            );
        }
        // Levels are disjoint node sets and never touch route endpoints.
        let mut seen = std::collections::BTreeSet::new();
        for level in &levels {
            for p in &level.placements {
                assert!(seen.insert(p.node.clone()), "levels must be disjoint");
            }
        }
        for r in &routes {
            assert!(!seen.contains(&r.nodes[0]));
            assert!(!seen.contains(&r.target));
        }
    }

    #[test]
    fn build_levels_edge_cases() {
        let g = generate_grid(6, 6, 1.0, 0).unwrap();
        let routes = generate_routes(&g, 24, 3, 2).unwrap();
        let catalog = demo_catalog();
        // Zero-ish first target -> empty level 1 (targets must strictly
        // increase, so use a tiny epsilon ladder).
        let config = GenConfig {
            coverage_targets: [0.0, 0.3, 0.5, 0.7],
            ..GenConfig::default()
        };
        let levels = build_levels(&g, &routes, &catalog, &config).unwrap();
        assert!(levels[0].placements.is_empty());
        assert_abs_diff_eq!(levels[0].affected_instruction_fraction, 0.0);

        // Zero budget with a positive target is infeasible.
        let config = GenConfig { node_budget_per_level: 0, ..GenConfig::default() };
        assert!(matches!(
            build_levels(&g, &routes, &catalog, &config),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn emit_level_roundtrip() {
        let g = generate_grid(8, 8, 1.0, 0).unwrap();
        let routes = generate_routes(&g, 60, 4, 2).unwrap();
        let levels = build_levels(&g, &routes, &demo_catalog(), &GenConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("level1.json");
        emit_level(&levels[0], &path).unwrap();
        let loaded = crate::rules::load_level(&path).unwrap();
        assert_eq!(loaded.level, levels[0].level);
        assert_eq!(loaded.placements, levels[0].placements);

        // Empty level writes an empty placements array.
        let empty = CurriculumLevel {
            level: 9,
            placements: vec![],
            affected_node_fraction: 0.0,
            affected_instruction_fraction: 0.0,
            coverage_target: 0.0,
            budget_exhausted: false,
        };
        let path = dir.path().join("empty.json");
        emit_level(&empty, &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("\"placements\": []"));

        let bad = emit_level(&empty, dir.path().join("missing/dir/level.json"));
        assert!(bad.is_err());
    }

    #[test]
    fn determinism_of_level_files() {
        let g = generate_grid(6, 6, 1.0, 0).unwrap();
        let routes = generate_routes(&g, 40, 4, 3).unwrap();
        let catalog = demo_catalog();
        let config = GenConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for run in 0..2 {
            let levels = build_levels(&g, &routes, &catalog, &config).unwrap();
            let path = dir.path().join(format!("run{run}.json"));
            emit_level(&levels[2], &path).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let g = generate_grid(5, 5, 1.0, 0).unwrap();
        let routes = generate_routes(&g, 30, 3, 9).unwrap();
        let scores = criticality_scores(&g, &routes, &GenConfig::default()).unwrap();
        for s in &scores {
            for v in [s.degree, s.betweenness, s.path_dependence, s.path_frequency, s.aggregate] {
                assert!((0.0..=1.0).contains(&v), "{} out of range for {}", v, s.node);
            }
        }
    }
}
