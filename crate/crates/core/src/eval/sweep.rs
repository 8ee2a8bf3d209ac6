//! Run orchestration: prepared levels, single cells, and the full
//! level x policy x rectification x setup grid, with deterministic
//! consolidated reports.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::episode::Episode;
use crate::eval::metrics::{compute_metrics, MetricsReport, DEFAULT_PROXIMITY_RADIUS};
use crate::eval::policy::PolicyKind;
use crate::eval::report::ReportRow;
use crate::eval::runner::{run_episode, AblationSetup, RunSpec, TrajectoryRecord};
use crate::graph::NavGraph;
use crate::perception::PerceptionConfig;
use crate::planner::PlannerConfig;
use crate::rules::{resolve_constraints, ConstraintSet, LevelFile, RuleCatalog};

/// A level made runnable: signs injected, constraints resolved.
pub struct PreparedLevel {
    pub level: u8,
    pub graph: NavGraph,
    pub constraints: ConstraintSet,
}

/// Inject a level's placements into a copy of the base graph and resolve
/// its constraint set.
pub fn prepare_level(
    base: &NavGraph,
    catalog: &RuleCatalog,
    level: &LevelFile,
) -> Result<PreparedLevel> {
    let constraints = resolve_constraints(base, catalog, &level.placements)?;
    let mut graph = base.clone();
    graph.inject_placements(&level.placements)?;
    Ok(PreparedLevel { level: level.level, graph, constraints })
}

/// One grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepCell {
    pub level: u8,
    pub policy: PolicyKind,
    pub snrm: bool,
    pub setup: u8,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    cell: &'a SweepCell,
    seed: u64,
    perception: &'a PerceptionConfig,
    planner: &'a PlannerConfig,
    proximity_radius: usize,
    n_episodes: usize,
}

/// Stable hex fingerprint of a cell configuration.
pub fn config_fingerprint(
    cell: &SweepCell,
    seed: u64,
    perception: &PerceptionConfig,
    planner: &PlannerConfig,
    proximity_radius: usize,
    n_episodes: usize,
) -> String {
    let input = FingerprintInput { cell, seed, perception, planner, proximity_radius, n_episodes };
    let json = serde_json::to_string(&input).expect("fingerprint input serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Run every episode of one cell (in parallel) and aggregate metrics.
pub fn run_cell(
    prepared: &PreparedLevel,
    catalog: &RuleCatalog,
    episodes: &[Episode],
    cell: &SweepCell,
    perception: &PerceptionConfig,
    planner: &PlannerConfig,
    seed: u64,
    proximity_radius: usize,
) -> Result<(MetricsReport, Vec<TrajectoryRecord>)> {
    // Setup 1 is the bare base policy; other setups modulate components.
    let (setup_snrm, ablation) = AblationSetup::table(cell.setup)?;
    let spec = RunSpec {
        graph: &prepared.graph,
        catalog,
        constraints: &prepared.constraints,
        perception,
        planner,
        snrm: cell.snrm && setup_snrm,
        ablation,
        seed,
    };
    let records: Vec<TrajectoryRecord> = episodes
        .par_iter()
        .map(|episode| run_episode(&spec, episode, cell.policy))
        .collect::<Result<_>>()?;
    let fingerprint =
        config_fingerprint(cell, seed, perception, planner, proximity_radius, episodes.len());
    let report = compute_metrics(
        &records,
        &prepared.graph,
        &prepared.constraints,
        episodes,
        proximity_radius,
        fingerprint,
    )?;
    Ok((report, records))
}

/// Result of one sweep cell.
pub struct CellResult {
    pub cell: SweepCell,
    pub report: MetricsReport,
    pub records: Vec<TrajectoryRecord>,
}

impl CellResult {
    pub fn to_row(&self, seed: u64) -> ReportRow {
        ReportRow {
            level: self.cell.level,
            policy: self.cell.policy.to_string(),
            snrm: self.cell.snrm,
            setup: self.cell.setup,
            tc: self.report.tc,
            spd: self.report.spd,
            cvr: self.report.cvr,
            n_episodes: self.report.n_episodes,
            seed,
        }
    }
}

/// Run the full grid over prepared levels. Cells run sequentially with
/// episode-level parallelism inside; row order is the deterministic
/// iteration order of the grid.
#[allow(clippy::too_many_arguments)]
pub fn sweep_grid(
    levels: &[PreparedLevel],
    catalog: &RuleCatalog,
    episodes: &[Episode],
    policies: &[PolicyKind],
    snrm_modes: &[bool],
    setups: &[u8],
    perception: &PerceptionConfig,
    planner: &PlannerConfig,
    seed: u64,
    proximity_radius: usize,
) -> Result<Vec<CellResult>> {
    let mut results = Vec::new();
    for level in levels {
        for policy in policies {
            for &snrm in snrm_modes {
                for &setup in setups {
                    let cell =
                        SweepCell { level: level.level, policy: *policy, snrm, setup };
                    let (report, records) = run_cell(
                        level,
                        catalog,
                        episodes,
                        &cell,
                        perception,
                        planner,
                        seed,
                        proximity_radius,
                    )?;
                    results.push(CellResult { cell, report, records });
                }
            }
        }
    }
    Ok(results)
}

fn default_proximity_radius() -> usize {
    DEFAULT_PROXIMITY_RADIUS
}

fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::RouteFollower, PolicyKind::GeometricSp, PolicyKind::CompliantOracle]
}

fn default_snrm_modes() -> Vec<bool> {
    vec![false, true]
}

fn default_setups() -> Vec<u8> {
    vec![1, 2, 3, 4, 5]
}

fn default_seed() -> u64 {
    7
}

/// File locations shared by run and sweep configs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunPaths {
    pub graph: PathBuf,
    pub catalog: PathBuf,
    pub levels_dir: PathBuf,
    pub episodes: PathBuf,
    pub out_dir: PathBuf,
}

/// Configuration of a single evaluation run over all level files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: RunPaths,
    pub policy: PolicyKind,
    #[serde(default)]
    pub snrm: bool,
    #[serde(default)]
    pub disable_mmvp: bool,
    #[serde(default)]
    pub disable_kdrg: bool,
    #[serde(default)]
    pub disable_mental_map: bool,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_proximity_radius")]
    pub proximity_radius: usize,
    #[serde(default)]
    pub episode_limit: Option<usize>,
    #[serde(default)]
    pub emit_trajectories: bool,
}

impl RunConfig {
    /// Map the three ablation toggles onto the canonical setup number.
    pub fn setup(&self) -> u8 {
        if !self.snrm {
            return 1;
        }
        match (self.disable_mmvp, self.disable_kdrg, self.disable_mental_map) {
            (false, false, false) => 5,
            (false, false, true) => 4,
            (true, false, false) => 3,
            (false, true, false) => 2,
            // Remaining combinations fall outside the canonical table;
            // treat everything off as the bare baseline.
            (true, true, true) => 1,
            _ => 5,
        }
    }
}

/// Configuration of a full sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub paths: RunPaths,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_snrm_modes")]
    pub snrm_modes: Vec<bool>,
    #[serde(default = "default_setups")]
    pub setups: Vec<u8>,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_proximity_radius")]
    pub proximity_radius: usize,
    #[serde(default)]
    pub episode_limit: Option<usize>,
}

/// Load level files from a directory, sorted by level number.
pub fn load_levels_dir(dir: impl AsRef<std::path::Path>) -> Result<Vec<LevelFile>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no level files in {}", dir.display())));
    }
    let mut levels: Vec<LevelFile> = files
        .iter()
        .map(crate::rules::load_level)
        .collect::<Result<_>>()?;
    levels.sort_by_key(|l| l.level);
    let mut seen = BTreeMap::new();
    for l in &levels {
        if let Some(prev) = seen.insert(l.level, ()) {
            let _ = prev;
            return Err(Error::Validation(format!("duplicate level {} in {}", l.level, dir.display())));
        }
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench_gen::{build_levels, generate_routes, GenConfig};
    use crate::graph::generate_grid;
    use crate::rules::demo_catalog;

    #[test]
    fn grid_rows_cover_cross_product() {
        let graph = generate_grid(5, 5, 1.0, 0).unwrap();
        let catalog = demo_catalog();
        let routes = generate_routes(&graph, 20, 3, 5).unwrap();
        let config = GenConfig { coverage_targets: [0.2, 0.4, 0.6, 0.8], ..GenConfig::default() };
        let levels = build_levels(&graph, &routes, &catalog, &config).unwrap();
        let episodes: Vec<Episode> = routes
            .iter()
            .take(6)
            .map(|r| Episode::from_route(r, &graph).unwrap())
            .collect();
        let prepared: Vec<PreparedLevel> = levels
            .iter()
            .map(|l| {
                let lf = LevelFile { level: l.level, placements: l.placements.clone() };
                prepare_level(&graph, &catalog, &lf).unwrap()
            })
            .take(2)
            .collect();
        let results = sweep_grid(
            &prepared,
            &catalog,
            &episodes,
            &[PolicyKind::RouteFollower],
            &[false, true],
            &[1, 5],
            &PerceptionConfig::noiseless(7),
            &PlannerConfig::default(),
            7,
            1,
        )
        .unwrap();
        assert_eq!(results.len(), 2 * 1 * 2 * 2);
    }

    #[test]
    fn identical_configs_fingerprint_equal() {
        let cell = SweepCell { level: 1, policy: PolicyKind::RouteFollower, snrm: true, setup: 5 };
        let p = PerceptionConfig::noiseless(7);
        let pl = PlannerConfig::default();
        let a = config_fingerprint(&cell, 7, &p, &pl, 1, 100);
        let b = config_fingerprint(&cell, 7, &p, &pl, 1, 100);
        assert_eq!(a, b);
        let c = config_fingerprint(&cell, 8, &p, &pl, 1, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn run_config_setup_mapping() {
        let mut cfg: RunConfig = serde_json::from_value(serde_json::json!({
            "paths": {
                "graph": "g.json", "catalog": "c.json", "levels_dir": "levels",
                "episodes": "e.json", "out_dir": "out"
            },
            "policy": "route_follower",
            "snrm": true
        }))
        .unwrap();
        assert_eq!(cfg.setup(), 5);
        cfg.disable_mental_map = true;
        assert_eq!(cfg.setup(), 4);
        cfg.disable_mental_map = false;
        cfg.disable_kdrg = true;
        assert_eq!(cfg.setup(), 2);
        cfg.snrm = false;
        assert_eq!(cfg.setup(), 1);
    }
}
