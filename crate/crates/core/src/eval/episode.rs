//! Episodes: a start pose, a gold route, a target, and a step budget.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench_gen::Route;
use crate::error::{Error, Result};
use crate::geom::normalize_heading;
use crate::graph::{EdgeKey, NavGraph, NodeId};

/// One evaluation episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub start_node: NodeId,
    pub start_heading: f64,
    pub gold_route: Vec<NodeId>,
    pub target: NodeId,
    pub max_steps: usize,
}

/// Default step budget for a route of `hops` edges.
fn default_max_steps(hops: usize) -> usize {
    4 * hops + 16
}

impl Episode {
    /// Build an episode from a route, facing the first edge, with the
    /// default step budget.
    pub fn from_route(route: &Route, graph: &NavGraph) -> Result<Episode> {
        route.validate(graph)?;
        let first = EdgeKey { from: route.nodes[0].clone(), to: route.nodes[1].clone() };
        let heading = graph.edge(&first)?.heading;
        Ok(Episode {
            id: route.id.clone(),
            start_node: route.nodes[0].clone(),
            start_heading: heading,
            gold_route: route.nodes.clone(),
            target: route.target.clone(),
            max_steps: default_max_steps(route.nodes.len() - 1),
        })
    }

    pub fn validate(&self, graph: &NavGraph) -> Result<()> {
        let fail = |reason: String| Error::InvalidRoute { id: self.id.clone(), reason };
        if self.gold_route.first() != Some(&self.start_node) {
            return Err(fail("gold route must begin at the start node".into()));
        }
        if self.gold_route.last() != Some(&self.target) {
            return Err(fail("gold route must end at the target".into()));
        }
        for pair in self.gold_route.windows(2) {
            if !graph.adjacent(&pair[0], &pair[1]) {
                return Err(fail(format!("`{}` and `{}` are not adjacent", pair[0], pair[1])));
            }
        }
        if self.max_steps == 0 {
            return Err(fail("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// An episodes file is the routes file plus optional start headings and
/// step budgets; omitted fields take route-derived defaults.
#[derive(Serialize, Deserialize)]
struct EpisodeFileEntry {
    id: String,
    nodes: Vec<NodeId>,
    target: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_heading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_steps: Option<usize>,
}

/// Load an episodes (or plain routes) file and validate against the graph.
pub fn load_episodes(path: impl AsRef<Path>, graph: &NavGraph) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let entries: Vec<EpisodeFileEntry> =
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    let mut episodes = Vec::with_capacity(entries.len());
    for entry in entries {
        let route = Route { id: entry.id, nodes: entry.nodes, target: entry.target };
        let mut episode = Episode::from_route(&route, graph)?;
        if let Some(h) = entry.start_heading {
            episode.start_heading = normalize_heading(h);
        }
        if let Some(m) = entry.max_steps {
            episode.max_steps = m;
        }
        episode.validate(graph)?;
        episodes.push(episode);
    }
    Ok(episodes)
}

/// Save episodes in the episodes-file format.
pub fn save_episodes(episodes: &[Episode], path: impl AsRef<Path>) -> Result<()> {
    let entries: Vec<EpisodeFileEntry> = episodes
        .iter()
        .map(|e| EpisodeFileEntry {
            id: e.id.clone(),
            nodes: e.gold_route.clone(),
            target: e.target.clone(),
            start_heading: Some(e.start_heading),
            max_steps: Some(e.max_steps),
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&entries)?)?;
    Ok(())
}
