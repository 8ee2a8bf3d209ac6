//! Metric computation: task completion, shortest-path distance from the
//! stop node, and the exposure-normalized constraint violation rate.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::episode::Episode;
use crate::eval::runner::TrajectoryRecord;
use crate::graph::{NavGraph, NodeId};
use crate::rules::ConstraintSet;

/// Default CVR proximity radius, in hops.
pub const DEFAULT_PROXIMITY_RADIUS: usize = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    pub success: bool,
    pub spd: f64,
    pub violations: usize,
    pub exposure: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: Vec<EpisodeMetrics>,
    /// Mean success (final node at or adjacent to the target).
    pub tc: f64,
    /// Mean hop distance from the stop node to the target.
    pub spd: f64,
    /// Mean of per-episode violations over exposure; zero-exposure
    /// episodes contribute zero while still counting in the mean.
    pub cvr: f64,
    pub n_episodes: usize,
    pub config_fingerprint: String,
    pub warnings: Vec<String>,
}

/// Compute the metric report for aligned records and episodes.
pub fn compute_metrics(
    records: &[TrajectoryRecord],
    graph: &NavGraph,
    constraints: &ConstraintSet,
    episodes: &[Episode],
    proximity_radius: usize,
    config_fingerprint: String,
) -> Result<MetricsReport> {
    if records.len() != episodes.len() {
        return Err(Error::Misaligned(format!(
            "{} records vs {} episodes",
            records.len(),
            episodes.len()
        )));
    }
    let exposed: BTreeSet<NodeId> =
        graph.neighborhood(constraints.constrained_nodes(), proximity_radius);

    let mut dist_cache: BTreeMap<NodeId, BTreeMap<NodeId, usize>> = BTreeMap::new();
    let mut per_episode = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    let (mut tc_sum, mut spd_sum, mut cvr_sum) = (0.0f64, 0.0f64, 0.0f64);

    for (record, episode) in records.iter().zip(episodes) {
        if record.episode_id != episode.id {
            return Err(Error::Misaligned(format!(
                "record `{}` does not match episode `{}`",
                record.episode_id, episode.id
            )));
        }
        let success = record.final_node == episode.target
            || graph.adjacent(&record.final_node, &episode.target);
        let dist = match dist_cache.get(&episode.target) {
            Some(d) => d,
            None => {
                let d = graph.hop_distances(&episode.target)?;
                dist_cache.entry(episode.target.clone()).or_insert(d)
            }
        };
        let spd = dist
            .get(&record.final_node)
            .copied()
            .ok_or_else(|| Error::UnknownNode(record.final_node.clone()))? as f64;
        let violations = record.steps.iter().filter(|s| !s.gt_mask).count();
        let exposure = record.steps.iter().filter(|s| exposed.contains(&s.to)).count();
        if violations > exposure {
            warnings.push(format!(
                "episode `{}`: {} violations exceed exposure {} (violation outside the proximity radius)",
                episode.id, violations, exposure
            ));
        }
        if violations > record.steps.len() {
            return Err(Error::Misaligned(format!(
                "episode `{}` has more violations than steps",
                episode.id
            )));
        }
        tc_sum += f64::from(success);
        spd_sum += spd;
        if exposure > 0 {
            cvr_sum += violations as f64 / exposure as f64;
        }
        per_episode.push(EpisodeMetrics {
            episode_id: episode.id.clone(),
            success,
            spd,
            violations,
            exposure,
            steps: record.steps.len(),
        });
    }

    let n = records.len();
    let denom = n.max(1) as f64;
    Ok(MetricsReport {
        episodes: per_episode,
        tc: tc_sum / denom,
        spd: spd_sum / denom,
        cvr: cvr_sum / denom,
        n_episodes: n,
        config_fingerprint,
        warnings,
    })
}
