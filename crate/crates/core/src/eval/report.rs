//! Report emission: summary CSV, per-episode trajectory JSON dumps, and
//! an SVG overlay of trajectories on the graph. All outputs are
//! deterministic functions of their inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::runner::TrajectoryRecord;
use crate::graph::{NavGraph, NodeId};
use crate::rules::ConstraintSet;

/// One summary row: a (level, policy, snrm, setup) cell's aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub level: u8,
    pub policy: String,
    pub snrm: bool,
    pub setup: u8,
    pub tc: f64,
    pub spd: f64,
    pub cvr: f64,
    pub n_episodes: usize,
    pub seed: u64,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Write the summary CSV. `with_setup` adds the ablation setup column
/// used by sweep reports; plain run reports keep the base schema.
pub fn write_summary_csv(rows: &[ReportRow], path: impl AsRef<Path>, with_setup: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    if with_setup {
        w.write_record(["level", "policy", "snrm", "setup", "tc", "spd", "cvr", "n_episodes", "seed"])?;
    } else {
        w.write_record(["level", "policy", "snrm", "tc", "spd", "cvr", "n_episodes", "seed"])?;
    }
    for r in rows {
        let mut record = vec![r.level.to_string(), r.policy.clone(), r.snrm.to_string()];
        if with_setup {
            record.push(r.setup.to_string());
        }
        record.extend([fmt6(r.tc), fmt6(r.spd), fmt6(r.cvr), r.n_episodes.to_string(), r.seed.to_string()]);
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a summary CSV written by [`write_summary_csv`], either schema.
pub fn load_summary_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let with_setup = headers.iter().any(|h| h == "setup");
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column `{name}`")))
    };
    let (ci_level, ci_policy, ci_snrm) = (col("level")?, col("policy")?, col("snrm")?);
    let (ci_tc, ci_spd, ci_cvr) = (col("tc")?, col("spd")?, col("cvr")?);
    let (ci_n, ci_seed) = (col("n_episodes")?, col("seed")?);
    let ci_setup = if with_setup { Some(col("setup")?) } else { None };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::parse(path, "short record"))
        };
        let parse_err = |e: &dyn std::fmt::Display| Error::parse(path, e);
        rows.push(ReportRow {
            level: get(ci_level)?.parse().map_err(|e| parse_err(&e))?,
            policy: get(ci_policy)?.to_string(),
            snrm: get(ci_snrm)?.parse().map_err(|e| parse_err(&e))?,
            setup: match ci_setup {
                Some(i) => get(i)?.parse().map_err(|e| parse_err(&e))?,
                None => 0,
            },
            tc: get(ci_tc)?.parse().map_err(|e| parse_err(&e))?,
            spd: get(ci_spd)?.parse().map_err(|e| parse_err(&e))?,
            cvr: get(ci_cvr)?.parse().map_err(|e| parse_err(&e))?,
            n_episodes: get(ci_n)?.parse().map_err(|e| parse_err(&e))?,
            seed: get(ci_seed)?.parse().map_err(|e| parse_err(&e))?,
        });
    }
    Ok(rows)
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Dump per-episode trajectory JSON files plus one SVG overlay.
pub fn emit_trajectories(
    records: &[TrajectoryRecord],
    graph: &NavGraph,
    constraints: &ConstraintSet,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for record in records {
        let path = dir.join(format!("{}.json", sanitize(&record.episode_id)));
        std::fs::write(path, serde_json::to_string_pretty(record)?)?;
    }
    let svg = trajectory_svg(records, graph, constraints);
    std::fs::write(dir.join("trajectories.svg"), svg)?;
    Ok(())
}

/// Render the graph, constrained nodes, and one polyline per trajectory.
pub fn trajectory_svg(
    records: &[TrajectoryRecord],
    graph: &NavGraph,
    constraints: &ConstraintSet,
) -> String {
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for node in graph.nodes() {
        min_x = min_x.min(node.position.x);
        min_y = min_y.min(node.position.y);
        max_x = max_x.max(node.position.x);
        max_y = max_y.max(node.position.y);
    }
    let pad = 1.0;
    let width = (max_x - min_x) + 2.0 * pad;
    let height = (max_y - min_y) + 2.0 * pad;
    let scale = 40.0;
    // SVG y grows downward; flip so +y points up.
    let tx = |x: f64| (x - min_x + pad) * scale;
    let ty = |y: f64| (max_y - y + pad) * scale;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.1} {:.1}\">\n",
        width * scale,
        height * scale
    ));
    for edge in graph.edges() {
        let a = graph.node(&edge.from).expect("endpoint").position;
        let b = graph.node(&edge.to).expect("endpoint").position;
        out.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n",
            tx(a.x), ty(a.y), tx(b.x), ty(b.y)
        ));
    }
    for node in constraints.constrained_nodes() {
        if let Ok(n) = graph.node(&node) {
            out.push_str(&format!(
                "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"6\" fill=\"#d62728\" fill-opacity=\"0.5\"/>\n",
                tx(n.position.x),
                ty(n.position.y)
            ));
        }
    }
    for (i, record) in records.iter().enumerate() {
        let mut nodes: Vec<&NodeId> = Vec::new();
        if let Some(first) = record.steps.first() {
            nodes.push(&first.from);
        } else {
            nodes.push(&record.final_node);
        }
        for step in &record.steps {
            nodes.push(&step.to);
        }
        let points: Vec<String> = nodes
            .iter()
            .filter_map(|id| graph.node(id).ok())
            .map(|n| format!("{:.1},{:.1}", tx(n.position.x), ty(n.position.y)))
            .collect();
        out.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" stroke-opacity=\"0.7\"/>\n",
            points.join(" "),
            PALETTE[i % PALETTE.len()]
        ));
    }
    out.push_str("</svg>\n");
    out
}
