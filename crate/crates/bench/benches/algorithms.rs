//! Benchmarks for the hot algorithmic paths: betweenness scoring, the
//! line-graph oracle, EM fitting, and whole-episode throughput.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rulenav_core::bench_gen::{betweenness_centrality, generate_routes};
use rulenav_core::eval::{
    compliant_shortest_path, prepare_level, run_episode, AblationSetup, Episode, PolicyKind,
    RunSpec,
};
use rulenav_core::gmm::{fit_gmm, GmmConfig, ScoreSample};
use rulenav_core::graph::{generate_grid, NodeId};
use rulenav_core::perception::PerceptionConfig;
use rulenav_core::planner::PlannerConfig;
use rulenav_core::rules::{turn_restriction_catalog, Facing, LevelFile, RuleId, SignPlacement};

fn bench_betweenness(c: &mut Criterion) {
    let grid = generate_grid(15, 15, 1.0, 0).unwrap();
    c.bench_function("betweenness_15x15", |b| {
        b.iter(|| betweenness_centrality(black_box(&grid)))
    });
}

fn bench_compliant_path(c: &mut Criterion) {
    let grid = generate_grid(15, 15, 1.0, 0).unwrap();
    let catalog = turn_restriction_catalog();
    let placements: Vec<SignPlacement> = (2..13)
        .step_by(3)
        .flat_map(|r| {
            (2..13).step_by(3).map(move |q| SignPlacement {
                node: NodeId::new(format!("r{r}c{q}")),
                rule: RuleId::new("no-left-turn"),
                facing: Facing::All,
                legibility: 1.0,
            })
        })
        .collect();
    let constraints =
        rulenav_core::rules::resolve_constraints(&grid, &catalog, &placements).unwrap();
    let start = NodeId::new("r0c0");
    let target = NodeId::new("r14c14");
    c.bench_function("compliant_shortest_path_15x15", |b| {
        b.iter(|| {
            compliant_shortest_path(
                black_box(&grid),
                black_box(&constraints),
                &start,
                None,
                &target,
            )
            .unwrap()
        })
    });
}

fn bench_gmm(c: &mut Criterion) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<ScoreSample> = (0..2000)
        .map(|i| {
            let (m, s) = if i % 2 == 0 { (0.2, 0.05) } else { (0.8, 0.05) };
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            ScoreSample { id: format!("s{i}"), score: m + s * z }
        })
        .collect();
    c.bench_function("fit_gmm_2000", |b| {
        b.iter(|| fit_gmm(black_box(&samples), &GmmConfig::default()).unwrap())
    });
}

fn bench_episode(c: &mut Criterion) {
    let grid = generate_grid(15, 15, 1.0, 0).unwrap();
    let catalog = turn_restriction_catalog();
    let routes = generate_routes(&grid, 8, 10, 3).unwrap();
    let placements: Vec<SignPlacement> = routes
        .iter()
        .flat_map(|r| r.nodes[2..r.nodes.len() - 2].iter().step_by(3))
        .map(|n| SignPlacement {
            node: n.clone(),
            rule: RuleId::new("no-right-turn"),
            facing: Facing::All,
            legibility: 1.0,
        })
        .collect();
    let level = LevelFile { level: 1, placements };
    let prepared = prepare_level(&grid, &catalog, &level).unwrap();
    let episode = Episode::from_route(&routes[0], &grid).unwrap();
    let perception = PerceptionConfig { miss_rate: 0.05, ..PerceptionConfig::noiseless(7) };
    let planner = PlannerConfig::default();
    let spec = RunSpec {
        graph: &prepared.graph,
        catalog: &catalog,
        constraints: &prepared.constraints,
        perception: &perception,
        planner: &planner,
        snrm: true,
        ablation: AblationSetup::full(),
        seed: 11,
    };
    c.bench_function("rectified_episode_15x15", |b| {
        b.iter(|| run_episode(black_box(&spec), black_box(&episode), PolicyKind::RouteFollower).unwrap())
    });
}

criterion_group!(
    benches,
    bench_betweenness,
    bench_compliant_path,
    bench_gmm,
    bench_episode
);
criterion_main!(benches);
