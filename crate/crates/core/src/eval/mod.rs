//! Evaluation: episodes, base policies, the constrained-path oracle, the
//! episode runner, metrics, reports, and sweep orchestration.

pub mod episode;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod report;
pub mod runner;
pub mod sweep;

pub use episode::{load_episodes, save_episodes, Episode};
pub use metrics::{compute_metrics, EpisodeMetrics, MetricsReport, DEFAULT_PROXIMITY_RADIUS};
pub use oracle::{brute_force_compliant_len, compliant_shortest_path, first_violation};
pub use policy::{
    policy_compliant_oracle, policy_geometric_sp, policy_route_follower, BasePolicy, PolicyKind,
};
pub use report::{
    emit_trajectories, load_summary_csv, trajectory_svg, write_summary_csv, ReportRow,
};
pub use runner::{
    run_episode, AblationSetup, RunSpec, StepRecord, TerminationReason, TrajectoryRecord,
};
pub use sweep::{
    config_fingerprint, load_levels_dir, prepare_level, run_cell, sweep_grid, CellResult,
    PreparedLevel, RunConfig, RunPaths, SweepCell, SweepConfig,
};
