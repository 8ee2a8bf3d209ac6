//! Scratch driver for desk-scale sanity checks.

use rulenav_core::bench_gen::*;
use rulenav_core::eval::*;
use rulenav_core::graph::generate_grid;
use rulenav_core::perception::PerceptionConfig;
use rulenav_core::planner::PlannerConfig;
use rulenav_core::rules::{turn_restriction_catalog, LevelFile};

fn main() {
    let start = std::time::Instant::now();
    let graph = generate_grid(15, 15, 1.0, 7).unwrap();
    let routes = generate_routes(&graph, 200, 6, 11).unwrap();
    let catalog = turn_restriction_catalog();
    let config = GenConfig::default();
    let levels = build_levels(&graph, &routes, &catalog, &config).unwrap();
    for l in &levels {
        println!(
            "L{}: placements={} node_frac={:.3} instr_frac={:.4} target={:.4} exhausted={}",
            l.level,
            l.placements.len(),
            l.affected_node_fraction,
            l.affected_instruction_fraction,
            l.coverage_target,
            l.budget_exhausted
        );
    }
    println!("bench gen took {:?}", start.elapsed());

    // Criterion-1 style: noiseless SNRM vs blind follower per level.
    let episodes: Vec<Episode> = routes
        .iter()
        .take(100)
        .map(|r| Episode::from_route(r, &graph).unwrap())
        .collect();
    let planner = PlannerConfig::default();
    for l in &levels {
        let lf = LevelFile { level: l.level, placements: l.placements.clone() };
        let prepared = prepare_level(&graph, &catalog, &lf).unwrap();
        for (snrm, name) in [(false, "blind"), (true, "snrm ")] {
            let t0 = std::time::Instant::now();
            let cell = SweepCell {
                level: l.level,
                policy: PolicyKind::RouteFollower,
                snrm,
                setup: 5,
            };
            let perception = PerceptionConfig::noiseless(7);
            let (report, records) =
                run_cell(&prepared, &catalog, &episodes, &cell, &perception, &planner, 42, 1)
                    .unwrap();
            let reasons: std::collections::BTreeMap<String, usize> =
                records.iter().fold(Default::default(), |mut m, r| {
                    *m.entry(format!("{:?}", r.terminated)).or_default() += 1;
                    m
                });
            println!(
                "L{} {name}: tc={:.3} spd={:.2} cvr={:.4} [{:?}] in {:?}",
                l.level, report.tc, report.spd, report.cvr, reasons, t0.elapsed()
            );
        }
    }
    println!("total {:?}", start.elapsed());

    // Criterion-2/3 style: noisy perception, SNRM vs base, and the
    // five ablation setups on the top level.
    let noisy = PerceptionConfig { miss_rate: 0.05, misclass_rate: 0.05, ..PerceptionConfig::noiseless(7) };
    let all_eps: Vec<Episode> = routes.iter().map(|r| Episode::from_route(r, &graph).unwrap()).collect();
    for l in &levels {
        let lf = LevelFile { level: l.level, placements: l.placements.clone() };
        let prepared = prepare_level(&graph, &catalog, &lf).unwrap();
        for seed in [42u64, 43, 44] {
            let mut line = format!("L{} seed {}:", l.level, seed);
            for (snrm, name) in [(false, "base"), (true, "snrm")] {
                let cell = SweepCell { level: l.level, policy: PolicyKind::RouteFollower, snrm, setup: 5 };
                let (report, _) = run_cell(&prepared, &catalog, &all_eps, &cell, &noisy, &planner, seed, 1).unwrap();
                line += &format!("  {name} tc={:.3} cvr={:.5}", report.tc, report.cvr);
            }
            println!("{line}");
        }
    }
    // Ablations on level 4.
    let lf = LevelFile { level: 4, placements: levels[3].placements.clone() };
    let prepared = prepare_level(&graph, &catalog, &lf).unwrap();
    for setup in 1..=5u8 {
        for seed in [42u64, 43, 44] {
            let cell = SweepCell { level: 4, policy: PolicyKind::RouteFollower, snrm: true, setup };
            let t0 = std::time::Instant::now();
            let (report, records) = run_cell(&prepared, &catalog, &all_eps, &cell, &noisy, &planner, seed, 1).unwrap();
            let stopped = records.iter().filter(|r| format!("{:?}", r.terminated).contains("Stopped")).count();
            println!("setup {setup} seed {seed}: tc={:.3} spd={:.2} cvr={:.5} stopped={} in {:?}", report.tc, report.spd, report.cvr, stopped, t0.elapsed());
        }
    }
}
