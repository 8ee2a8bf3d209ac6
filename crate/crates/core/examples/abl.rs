//! Probe ablation orderings across noise configurations.
use rulenav_core::bench_gen::*;
use rulenav_core::eval::*;
use rulenav_core::graph::generate_grid;
use rulenav_core::perception::PerceptionConfig;
use rulenav_core::planner::PlannerConfig;
use rulenav_core::rules::{turn_restriction_catalog, LevelFile};

fn main() {
    let catalog = turn_restriction_catalog();
    let planner = PlannerConfig::default();
    let mut instances = Vec::new();
    for seed in [101u64, 202, 303] {
        let graph = generate_grid(15, 15, 1.0, seed).unwrap();
        let routes = generate_routes(&graph, 200, 6, seed ^ 0x11).unwrap();
        let config = GenConfig { seed, ..GenConfig::default() };
        let levels = build_levels(&graph, &routes, &catalog, &config).unwrap();
        let l4 = levels.last().unwrap();
        let lf = LevelFile { level: 4, placements: l4.placements.clone() };
        let prepared = prepare_level(&graph, &catalog, &lf).unwrap();
        let episodes: Vec<Episode> = routes.iter().map(|r| Episode::from_route(r, &graph).unwrap()).collect();
        instances.push((seed, prepared, episodes));
    }
    for (name, miss, mc, fa) in [
        ("A m05 c05 f02", 0.05, 0.05, 0.02),
        ("B m10 c10 f05", 0.10, 0.10, 0.05),
        ("C m05 c05 f05", 0.05, 0.05, 0.05),
        ("D m15 c05 f00", 0.15, 0.05, 0.00),
        ("E m08 c08 f03", 0.08, 0.08, 0.03),
    ] {
        let noise = PerceptionConfig { miss_rate: miss, misclass_rate: mc, false_alarm_rate: fa, ..PerceptionConfig::noiseless(7) };
        let mut tc = [0.0f64; 5];
        let mut cvr = [0.0f64; 5];
        for (seed, prepared, episodes) in &instances {
            for setup in 1..=5u8 {
                let cell = SweepCell { level: 4, policy: PolicyKind::RouteFollower, snrm: true, setup };
                let (r, _) = run_cell(prepared, &catalog, episodes, &cell, &noise, &planner, *seed, 1).unwrap();
                tc[(setup-1) as usize] += r.tc / 3.0;
                cvr[(setup-1) as usize] += r.cvr / 3.0;
            }
        }
        println!("{name}: tc={:?}", tc.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
        println!("{name}: cvr={:?}", cvr.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>());
        let ok = cvr[3] < cvr[0].min(cvr[1]).min(cvr[2]).min(cvr[4]) && tc[3] < tc[4] && tc[4] >= tc[0].max(tc[1]).max(tc[2]).max(tc[3]);
        println!("{name}: table-4 structure {}", if ok { "HOLDS" } else { "BROKEN" });
    }
}
